"""Multitype branching processes on finite truncations of countable site spaces."""
