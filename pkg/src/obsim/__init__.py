"""OBS network simulator with adaptive hybrid deflection and retransmission."""
