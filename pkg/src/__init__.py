# Sub-threshold 8T SRAM read-window simulator
