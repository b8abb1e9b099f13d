"""Engine sizing parameters and their derived quantities.

All sizes are in bytes. Entries occupy fixed-width slots of ``entry_bytes``
so that a page always holds exactly ``entries_per_page`` entries and fence
pointer arithmetic stays exact.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ConfigError

# Per-entry framing: u16 key length, u16 value length, u64 seqnum, u8 kind.
ENTRY_HEADER_BYTES = 13

MIB = 1024 * 1024
KIB = 1024


@dataclass(frozen=True)
class TreeConfig:
    """Static tuning of one LSM-tree instance.

    Defaults follow the common benchmarking setup: size ratio 10, an 8 MiB
    write buffer of 512 16 KiB pages, 128-byte entries, 10 bits per key for
    the Bloom filters, and an 8 MiB block cache.
    """

    size_ratio: int = 10
    buffer_bytes: int = 8 * MIB
    page_bytes: int = 16 * KIB
    entry_bytes: int = 128
    bits_per_key: float = 10.0
    block_cache_bytes: int = 8 * MIB
    file_bytes: int | None = None
    delete_persistence_threshold: int | None = None

    def __post_init__(self) -> None:
        if self.size_ratio < 2:
            raise ConfigError(f"size_ratio must be >= 2, got {self.size_ratio}")
        if self.entry_bytes < ENTRY_HEADER_BYTES + 2:
            raise ConfigError(f"entry_bytes too small: {self.entry_bytes}")
        if self.page_bytes < self.entry_bytes:
            raise ConfigError("page_bytes must hold at least one entry")
        if self.buffer_bytes < self.page_bytes:
            raise ConfigError("buffer_bytes must hold at least one page")
        if self.bits_per_key < 0:
            raise ConfigError("bits_per_key must be >= 0")
        if self.block_cache_bytes < 0:
            raise ConfigError("block_cache_bytes must be >= 0")
        fb = self.file_bytes
        if fb is None:
            object.__setattr__(self, "file_bytes", self.buffer_bytes)
        elif fb % self.page_bytes != 0 or fb <= 0:
            raise ConfigError("file_bytes must be a positive multiple of page_bytes")
        dth = self.delete_persistence_threshold
        if dth is not None and dth <= 0:
            raise ConfigError("delete_persistence_threshold must be positive")

    @property
    def entries_per_page(self) -> int:
        return self.page_bytes // self.entry_bytes

    @property
    def pages_per_buffer(self) -> int:
        return self.buffer_bytes // self.page_bytes

    @property
    def entries_per_buffer(self) -> int:
        return self.pages_per_buffer * self.entries_per_page

    @property
    def pages_per_file(self) -> int:
        assert self.file_bytes is not None
        return self.file_bytes // self.page_bytes

    @property
    def entries_per_file(self) -> int:
        return self.pages_per_file * self.entries_per_page

    def level_capacity_bytes(self, level: int) -> int:
        """Nominal capacity of disk level ``level`` (1-based): M * T^level."""
        if level < 1:
            raise ConfigError(f"disk levels are 1-based, got {level}")
        return self.buffer_bytes * self.size_ratio**level
