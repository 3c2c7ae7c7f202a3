"""Traffic sources: constant bit rate flows and window-controlled TCP populations."""

from .cbr import CbrGenerator, CbrSource, cbr_departures, cbr_schedule
from .subnets import SubnetGroup, overload_ratios, staged_start
from .tcp import AccessLink, LossKind, RtoParams, TcpConnection, TcpSource, TcpState, tcp_on_ack, tcp_on_loss
