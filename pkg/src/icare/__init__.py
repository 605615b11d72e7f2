"""iCare: elderly telemonitoring at desk scale.

Simulated body sensors stream vitals to a gateway that runs per-channel
threshold monitoring with alarm escalation, syncs records to a
health-information server, and alerts an emergency-centre service.  A
deterministic scenario harness wires everything together in one process.
"""

__version__ = "0.1.0"
