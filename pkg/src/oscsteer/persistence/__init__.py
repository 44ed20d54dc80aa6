"""Persistence layer: run event log and artifact writers."""

from oscsteer.persistence.event_log import RunEvent, RunEventKind, RunLog
