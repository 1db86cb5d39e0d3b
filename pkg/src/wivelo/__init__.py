"""Device-free walking trajectory tracking from Wi-Fi CSI.

The package turns per-packet channel state information from one
transmitter and two three-antenna receivers into a walking trajectory:
subcarrier shift distributions give the walking direction on an ellipse
mesh, an EMD search gives the arrival time at the next mesh landmark and a
dynamic program smooths the arrival sequence.
"""
__version__ = "0.1.0"
