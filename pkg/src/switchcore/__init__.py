"""Discrete-event model of a feedback output queuing switch."""
