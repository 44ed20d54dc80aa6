"""Terminal stage: exact Lyapunov matrix and time-scale feedback."""

from oscsteer.terminal.controller import TerminalController
