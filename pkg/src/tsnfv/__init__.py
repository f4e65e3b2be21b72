"""Time-sensitive networking control plane for NFV deployments.

An orchestrator derives TSN streams from network service descriptors and
negotiates them with per-domain controllers, which compute 802.1Qbv
gate schedules for the bridges they own. A discrete-event verifier
replays the admitted configuration and checks the promised latency
bounds hold under best-effort interference.
"""

__version__ = "0.1.0"
