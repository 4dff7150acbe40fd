"""Desk-scale simulator for the Zynq PS->PL configuration path.

Subsystems: the 7-series style configuration packet codec (`packets`), a
simulated configuration plane with frame memory (`fabric`), the DevC/PCAP/DMA
gateway (`devc`), a dual-redundant AES design-under-test model (`dut`), an
isolation floorplan rule checker (`verifier`), and the fault-injection
campaign driver (`campaign`).  `cli` binds everything to a command line.
"""

__version__ = "0.1.0"
