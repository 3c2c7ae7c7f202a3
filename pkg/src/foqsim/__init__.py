"""Feedback output queuing switch simulator: experiments, time series and CLI."""
