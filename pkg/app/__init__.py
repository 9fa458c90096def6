"""Hybrid DRAM/NVM memory system simulator."""
