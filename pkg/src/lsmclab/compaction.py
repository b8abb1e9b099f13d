"""Compaction strategies as an ensemble of four primitives.

A strategy combines a trigger set (when to compact), a data layout
(how runs are arranged per level), a granularity (how much data one job
moves) and a data-movement policy chain (which files to move). The ten
named presets cover the common production designs; arbitrary ensembles
can be composed from the same parts.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .config import ENTRY_HEADER_BYTES
from .errors import InvalidArgument, InvariantViolation
from .manifest import ADD_NEW_RUN, ADD_SPLICE, VersionEdit
from .sstable import TOMBSTONE, SortedFileMeta, load_slot_matrix


class TriggerKind(Enum):
    LEVEL_SATURATION = "level_saturation"
    SORTED_RUN_COUNT = "sorted_run_count"
    FILE_STALENESS = "file_staleness"
    SPACE_AMP = "space_amp"
    TOMBSTONE_TTL = "tombstone_ttl"
    TOMBSTONE_DENSITY = "tombstone_density"


@dataclass(frozen=True)
class Trigger:
    kind: TriggerKind
    # None selects the kind's default at evaluation time (e.g. run count = T,
    # tombstone TTL = the engine's delete persistence threshold).
    value: float | None = None

    def __post_init__(self) -> None:
        v = self.value
        if v is None:
            return
        k = self.kind
        if k is TriggerKind.LEVEL_SATURATION and not 0 < v <= 2:
            raise InvalidArgument("saturation threshold must be in (0, 2]")
        if k is TriggerKind.SORTED_RUN_COUNT and v < 2:
            raise InvalidArgument("run-count threshold must be >= 2")
        if k in (TriggerKind.FILE_STALENESS, TriggerKind.TOMBSTONE_TTL) and v <= 0:
            raise InvalidArgument("ttl must be positive")
        if k is TriggerKind.SPACE_AMP and v <= 0:
            raise InvalidArgument("space-amp ratio must be positive")
        if k is TriggerKind.TOMBSTONE_DENSITY and not 0 < v <= 1:
            raise InvalidArgument("tombstone density must be in (0, 1]")


class LayoutKind(Enum):
    LEVELING = "leveling"
    TIERING = "tiering"
    ONE_LEVELING = "one_leveling"
    L_LEVELING = "l_leveling"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class DataLayout:
    kind: LayoutKind
    flags: tuple[str, ...] = ()  # per-level "tiered"/"leveled" for HYBRID

    def __post_init__(self) -> None:
        if self.kind is LayoutKind.HYBRID:
            if not self.flags or any(f not in ("tiered", "leveled") for f in self.flags):
                raise InvalidArgument("hybrid layout needs per-level tiered/leveled flags")

    def is_tiered(self, level: int, last_level: int) -> bool:
        k = self.kind
        if k is LayoutKind.LEVELING:
            return False
        if k is LayoutKind.TIERING:
            return True
        if k is LayoutKind.ONE_LEVELING:
            return level == 1
        if k is LayoutKind.L_LEVELING:
            return level < max(last_level, 1)
        flags = self.flags
        flag = flags[level - 1] if level - 1 < len(flags) else flags[-1]
        return flag == "tiered"


class GranularityKind(Enum):
    LEVEL = "level"
    SORTED_RUN = "sorted_run"
    FILE = "file"
    FILES = "files"


@dataclass(frozen=True)
class Granularity:
    kind: GranularityKind
    n: int = 1

    def __post_init__(self) -> None:
        if self.kind is GranularityKind.FILES and self.n < 2:
            raise InvalidArgument("Files granularity needs n >= 2")


class MovementPolicy(Enum):
    ENTIRE_LEVEL = "entire_level"
    ROUND_ROBIN = "round_robin"
    LEAST_OVERLAP_PARENT = "least_overlap_parent"
    LEAST_OVERLAP_GRANDPARENT = "least_overlap_grandparent"
    COLDEST = "coldest"
    OLDEST = "oldest"
    MOST_TOMBSTONES = "most_tombstones"
    EXPIRED_TOMBSTONE_TTL = "expired_tombstone_ttl"


# Policies that never abstain; a movement chain must end with one of these.
_DECIDABLE = {
    MovementPolicy.ENTIRE_LEVEL,
    MovementPolicy.ROUND_ROBIN,
    MovementPolicy.LEAST_OVERLAP_PARENT,
    MovementPolicy.LEAST_OVERLAP_GRANDPARENT,
    MovementPolicy.COLDEST,
    MovementPolicy.OLDEST,
}


@dataclass(frozen=True)
class CompactionStrategy:
    name: str
    triggers: tuple[Trigger, ...]
    layout: DataLayout
    granularity: Granularity
    movement: tuple[MovementPolicy, ...]

    def __post_init__(self) -> None:
        if not self.triggers:
            raise InvalidArgument("strategy needs at least one trigger")
        if not self.movement:
            raise InvalidArgument("movement chain must be non-empty")
        if self.movement[-1] not in _DECIDABLE:
            raise InvalidArgument("movement chain must end with a decidable policy")


def _leveled_file_strategy(name: str, policy: MovementPolicy) -> CompactionStrategy:
    return CompactionStrategy(
        name=name,
        triggers=(Trigger(TriggerKind.LEVEL_SATURATION, 1.0),),
        layout=DataLayout(LayoutKind.LEVELING),
        granularity=Granularity(GranularityKind.FILE),
        movement=(policy,),
    )


def presets() -> dict[str, CompactionStrategy]:
    """The ten named strategies, keyed by their CLI names."""
    sat = Trigger(TriggerKind.LEVEL_SATURATION, 1.0)
    return {
        "full": CompactionStrategy(
            "full",
            triggers=(sat,),
            layout=DataLayout(LayoutKind.LEVELING),
            granularity=Granularity(GranularityKind.LEVEL),
            movement=(MovementPolicy.ENTIRE_LEVEL,),
        ),
        "lo1": _leveled_file_strategy("lo1", MovementPolicy.LEAST_OVERLAP_PARENT),
        "lo2": _leveled_file_strategy("lo2", MovementPolicy.LEAST_OVERLAP_GRANDPARENT),
        "rr": _leveled_file_strategy("rr", MovementPolicy.ROUND_ROBIN),
        "cold": _leveled_file_strategy("cold", MovementPolicy.COLDEST),
        "old": _leveled_file_strategy("old", MovementPolicy.OLDEST),
        "tsd": CompactionStrategy(
            "tsd",
            # above the typical per-file delete fraction, so only
            # tombstone-saturated files fire rather than every file
            triggers=(Trigger(TriggerKind.TOMBSTONE_DENSITY, 0.2), sat),
            layout=DataLayout(LayoutKind.LEVELING),
            granularity=Granularity(GranularityKind.FILE),
            movement=(
                MovementPolicy.MOST_TOMBSTONES,
                MovementPolicy.LEAST_OVERLAP_PARENT,
            ),
        ),
        "tsa": CompactionStrategy(
            "tsa",
            triggers=(Trigger(TriggerKind.TOMBSTONE_TTL, None), sat),
            layout=DataLayout(LayoutKind.LEVELING),
            granularity=Granularity(GranularityKind.FILE),
            movement=(
                MovementPolicy.EXPIRED_TOMBSTONE_TTL,
                MovementPolicy.LEAST_OVERLAP_PARENT,
            ),
        ),
        "tier": CompactionStrategy(
            "tier",
            triggers=(
                Trigger(TriggerKind.SORTED_RUN_COUNT, None),
                Trigger(TriggerKind.SPACE_AMP, 0.5),
            ),
            layout=DataLayout(LayoutKind.TIERING),
            granularity=Granularity(GranularityKind.SORTED_RUN),
            movement=(MovementPolicy.ENTIRE_LEVEL,),
        ),
        "1lvl": CompactionStrategy(
            "1lvl",
            triggers=(Trigger(TriggerKind.SORTED_RUN_COUNT, None), sat),
            layout=DataLayout(LayoutKind.ONE_LEVELING),
            granularity=Granularity(GranularityKind.FILE),
            movement=(MovementPolicy.LEAST_OVERLAP_PARENT,),
        ),
    }


PRESET_NAMES = tuple(presets().keys())


def get_strategy(name: str) -> CompactionStrategy:
    table = presets()
    key = name.strip().lower().replace("+", "").replace("-", "")
    aliases = {"lo1": "lo1", "lo2": "lo2", "1lvl": "1lvl", "onelvl": "1lvl"}
    key = aliases.get(key, key)
    if key not in table:
        raise InvalidArgument(f"unknown strategy {name!r}; presets: {PRESET_NAMES}")
    return table[key]


# ---------------------------------------------------------------------------
# Jobs


@dataclass
class CompactionJob:
    source_level: int
    victim_ids: list[int]
    target_level: int
    target_ids: list[int]
    pseudo: bool
    purge: bool
    add_mode: str  # manifest placement of outputs
    trigger: Trigger


@dataclass
class CompactionResult:
    bytes_read: int
    bytes_written: int
    entries_dropped: int
    output_ids: list[int]
    pseudo: bool


# ---------------------------------------------------------------------------
# Trigger evaluation


def _ttl_deadline(level: int, d_th: float, realized_levels: int) -> float:
    """Cumulative per-level deadline for tombstone ages.

    A tombstone must leave level i before its age exceeds i slices of
    D_th / (L + 1), so it is purged at the last level strictly before D_th.
    """
    return level * d_th / (realized_levels + 1)


def _space_amp_quick(engine) -> float:
    """Cheap trigger-side estimate of obsolete over live bytes.

    The live set is approximated by the unique keys ingested this session
    (or, after a reopen, by the largest run of the deepest level), so
    duplication across sibling runs is visible without a full merge; exact
    measurement stays in the metrics pipeline.
    """
    man = engine.manifest
    deepest = man.deepest_nonempty_level()
    if deepest == 0:
        return 0.0
    largest = max(
        sum(man.files[fid].entry_count for fid in run)
        for run in man.runs_in_level(deepest)
    )
    live = max(largest, len(engine.metrics.unique_keys))
    rest = man.total_entries() - live
    return max(rest / live, 0.0) if live else 0.0


def _sa_actionable_level(manifest) -> int | None:
    """Level a space-amp job should service, or None if nothing to do."""
    for level_no in range(1, manifest.level_count() + 1):
        if manifest.run_count(level_no) >= 2:
            return level_no
    if manifest.nonempty_level_count() >= 2:
        for level_no in range(1, manifest.level_count() + 1):
            if manifest.run_count(level_no):
                return level_no
    return None


def evaluate_triggers(engine) -> list[tuple[int, Trigger]]:
    """All currently-firing (level, trigger) pairs.

    Ordered by the strategy's trigger priority, then shallower level first.
    """
    strategy: CompactionStrategy = engine.strategy
    man = engine.manifest
    cfg = engine.cfg
    deepest = man.deepest_nonempty_level()
    now = man.logical_tick
    fired: list[tuple[int, Trigger]] = []

    for trig in strategy.triggers:
        kind = trig.kind
        if kind is TriggerKind.SPACE_AMP:
            if _space_amp_quick(engine) > (trig.value or 0.5):
                level = _sa_actionable_level(man)
                if level is not None:
                    fired.append((level, trig))
            continue
        for level_no in range(1, man.level_count() + 1):
            runs = man.runs_in_level(level_no)
            if not runs:
                continue
            tiered = strategy.layout.is_tiered(level_no, deepest)
            if kind is TriggerKind.LEVEL_SATURATION:
                threshold = trig.value if trig.value is not None else 1.0
                level_bytes = man.entries_in_level(level_no) * cfg.entry_bytes
                over = level_bytes > threshold * cfg.level_capacity_bytes(level_no)
                multi_run = not tiered and len(runs) > 1
                # whole-level granularity compacts the arrival level into its
                # parent on every flush once the tree has grown deeper
                whole_level = (
                    strategy.granularity.kind is GranularityKind.LEVEL
                    and not tiered
                    and level_no == 1
                    and deepest > 1
                )
                if over or multi_run or whole_level:
                    fired.append((level_no, trig))
            elif kind is TriggerKind.SORTED_RUN_COUNT:
                k = trig.value if trig.value is not None else cfg.size_ratio
                if len(runs) >= k:
                    fired.append((level_no, trig))
            elif kind is TriggerKind.TOMBSTONE_TTL:
                d_th = trig.value
                if d_th is None:
                    d_th = cfg.delete_persistence_threshold
                if d_th is None:
                    continue
                deadline = _ttl_deadline(level_no, d_th, max(deepest, 1))
                for run in runs:
                    if any(
                        (m := man.files[fid]).oldest_tombstone_tick is not None
                        and now - m.oldest_tombstone_tick > deadline
                        for fid in run
                    ):
                        fired.append((level_no, trig))
                        break
            elif kind is TriggerKind.FILE_STALENESS:
                ttl = trig.value
                if ttl is None:
                    continue
                if any(
                    now - man.files[fid].created_tick > ttl
                    for run in runs
                    for fid in run
                ):
                    fired.append((level_no, trig))
            elif kind is TriggerKind.TOMBSTONE_DENSITY:
                frac = trig.value if trig.value is not None else 0.2
                if any(
                    (m := man.files[fid]).entry_count
                    and m.tombstone_count / m.entry_count >= frac
                    for run in runs
                    for fid in run
                ):
                    fired.append((level_no, trig))
    return fired


# ---------------------------------------------------------------------------
# Victim selection


def _overlap_bytes(engine, min_key: bytes, max_key: bytes, level_no: int) -> int:
    man = engine.manifest
    total = 0
    for run in man.runs_in_level(level_no):
        for fid in run:
            meta = man.files[fid]
            if meta.overlaps(min_key, max_key):
                total += meta.data_bytes(engine.cfg)
    return total


def _rank_candidates(
    engine, level_no: int, metas: list[SortedFileMeta], policy: MovementPolicy, trigger: Trigger
) -> list[SortedFileMeta] | None:
    """Candidates in pick order for one policy; None means the policy abstains."""
    man = engine.manifest
    now = man.logical_tick
    if policy is MovementPolicy.ENTIRE_LEVEL:
        return sorted(metas, key=lambda m: (m.min_key, m.file_id))
    if policy is MovementPolicy.ROUND_ROBIN:
        ordered = sorted(metas, key=lambda m: (m.min_key, m.file_id))
        cursor = engine.rr_cursors.get(level_no)
        if cursor is not None:
            after = [m for m in ordered if m.min_key > cursor]
            ordered = after + [m for m in ordered if m.min_key <= cursor]
        return ordered
    if policy is MovementPolicy.LEAST_OVERLAP_PARENT:
        return sorted(
            metas,
            key=lambda m: (
                _overlap_bytes(engine, m.min_key, m.max_key, level_no + 1),
                m.min_key,
                m.file_id,
            ),
        )
    if policy is MovementPolicy.LEAST_OVERLAP_GRANDPARENT:
        # parent overlap breaks grandparent ties, else an empty grandparent
        # level collapses every pick onto the lowest key range
        return sorted(
            metas,
            key=lambda m: (
                _overlap_bytes(engine, m.min_key, m.max_key, level_no + 2),
                _overlap_bytes(engine, m.min_key, m.max_key, level_no + 1),
                m.min_key,
                m.file_id,
            ),
        )
    if policy is MovementPolicy.COLDEST:
        # ties are the common case after an in-place level rewrite stamps
        # every file with the same tick; break them toward the cheapest
        # merge or the leftmost pick degenerates into rewriting the parent
        return sorted(
            metas,
            key=lambda m: (
                -(now - m.last_access_tick),
                _overlap_bytes(engine, m.min_key, m.max_key, level_no + 1),
                m.min_key,
                m.file_id,
            ),
        )
    if policy is MovementPolicy.OLDEST:
        return sorted(
            metas,
            key=lambda m: (
                m.created_tick,
                _overlap_bytes(engine, m.min_key, m.max_key, level_no + 1),
                m.min_key,
                m.file_id,
            ),
        )
    if policy is MovementPolicy.MOST_TOMBSTONES:
        with_ts = [m for m in metas if m.tombstone_count]
        if not with_ts:
            return None
        return sorted(
            with_ts,
            key=lambda m: (
                -(m.tombstone_count / m.entry_count),
                m.min_key,
                m.file_id,
            ),
        )
    if policy is MovementPolicy.EXPIRED_TOMBSTONE_TTL:
        d_th = trigger.value
        if d_th is None or trigger.kind is not TriggerKind.TOMBSTONE_TTL:
            d_th = engine.cfg.delete_persistence_threshold
        if d_th is None:
            return None
        deadline = _ttl_deadline(
            level_no, d_th, max(engine.manifest.deepest_nonempty_level(), 1)
        )
        expired = [
            m
            for m in metas
            if m.oldest_tombstone_tick is not None
            and now - m.oldest_tombstone_tick > deadline
        ]
        if not expired:
            return None
        return sorted(expired, key=lambda m: (m.oldest_tombstone_tick, m.file_id))
    raise InvariantViolation(f"unhandled movement policy {policy}")


def _pick_victims(
    engine, level_no: int, metas: list[SortedFileMeta], n: int, trigger: Trigger
) -> list[SortedFileMeta]:
    for policy in engine.strategy.movement:
        ranked = _rank_candidates(engine, level_no, metas, policy, trigger)
        if ranked:
            picked = ranked[:n]
            if policy is MovementPolicy.ROUND_ROBIN:
                engine.rr_cursors[level_no] = max(m.min_key for m in picked)
            return picked
    raise InvariantViolation("movement chain abstained at its final element")


def _level_metas(man, level_no: int) -> list[SortedFileMeta]:
    return [man.files[fid] for run in man.runs_in_level(level_no) for fid in run]


def _overlapping_targets(engine, victims: list[SortedFileMeta], level_no: int) -> list[int]:
    if not victims:
        return []
    low = min(m.min_key for m in victims)
    high = max(m.max_key for m in victims)
    man = engine.manifest
    out: list[int] = []
    for run in man.runs_in_level(level_no):
        for fid in run:
            if man.files[fid].overlaps(low, high):
                out.append(fid)
    return out


def _purge_allowed(engine, target_level: int, target_covers_level: bool) -> bool:
    """Tombstones may be dropped when nothing lives below the target and the
    target level cannot hide older versions outside the merge inputs."""
    man = engine.manifest
    deepest = man.deepest_nonempty_level()
    if deepest > target_level:
        return False
    tiered_target = engine.strategy.layout.is_tiered(target_level, max(deepest, 1))
    if not tiered_target:
        # key-disjoint single run: files outside the merge cannot share keys
        return True
    return target_covers_level or man.run_count(target_level) == 0


def select_compaction(engine, level_no: int, trigger: Trigger) -> CompactionJob:
    """Turn one firing trigger into a concrete job."""
    strategy: CompactionStrategy = engine.strategy
    man = engine.manifest
    metas = _level_metas(man, level_no)
    if not metas:
        raise InvalidArgument(f"level {level_no} is empty")
    deepest = man.deepest_nonempty_level()
    tiered = strategy.layout.is_tiered(level_no, deepest)
    runs = man.runs_in_level(level_no)

    def job(victims, target_level, target_ids, add_mode, covers_target):
        victim_ids = [m.file_id for m in victims]
        pseudo = (
            not target_ids
            and target_level != level_no
            and strategy.granularity.kind
            in (GranularityKind.FILE, GranularityKind.FILES)
            and not tiered
        )
        return CompactionJob(
            source_level=level_no,
            victim_ids=victim_ids,
            target_level=target_level,
            target_ids=target_ids,
            pseudo=pseudo,
            purge=_purge_allowed(engine, target_level, covers_target),
            add_mode=add_mode,
            trigger=trigger,
        )

    file_scoped = trigger.kind in (
        TriggerKind.TOMBSTONE_TTL,
        TriggerKind.TOMBSTONE_DENSITY,
        TriggerKind.FILE_STALENESS,
    )
    if file_scoped and not tiered:
        if len(runs) > 1:
            # restore the one-run invariant before moving single files
            return job(metas, level_no, [], ADD_SPLICE, covers_target=True)
        n = strategy.granularity.n if strategy.granularity.kind is GranularityKind.FILES else 1
        victims = _pick_victims(engine, level_no, metas, n, trigger)
        if level_no == deepest:
            # rewrite in place: drops expired tombstones at the tree bottom
            return job(victims, level_no, [], ADD_SPLICE, covers_target=False)
        targets = _overlapping_targets(engine, victims, level_no + 1)
        target_tiered = strategy.layout.is_tiered(level_no + 1, deepest)
        mode = ADD_NEW_RUN if target_tiered else ADD_SPLICE
        return job(victims, level_no + 1, targets, mode, covers_target=False)

    if tiered:
        # merge all sorted runs of the level into the next level
        victims = metas
        target_tiered = strategy.layout.is_tiered(level_no + 1, deepest)
        if target_tiered:
            return job(victims, level_no + 1, [], ADD_NEW_RUN, covers_target=False)
        targets = _overlapping_targets(engine, victims, level_no + 1)
        return job(victims, level_no + 1, targets, ADD_SPLICE, covers_target=False)

    gran = strategy.granularity.kind
    if len(runs) > 1 and gran in (GranularityKind.FILE, GranularityKind.FILES):
        # restore the one-run-per-level leveling invariant in place
        return job(metas, level_no, [], ADD_SPLICE, covers_target=True)

    if gran in (GranularityKind.LEVEL, GranularityKind.SORTED_RUN):
        # whole-level granularity merges the level into its parent outright,
        # so a freshly flushed run empties the level instead of settling in it
        targets = [
            fid for run in man.runs_in_level(level_no + 1) for fid in run
        ]
        return job(metas, level_no + 1, targets, ADD_SPLICE, covers_target=True)

    n = strategy.granularity.n if gran is GranularityKind.FILES else 1
    victims = _pick_victims(engine, level_no, metas, n, trigger)
    targets = _overlapping_targets(engine, victims, level_no + 1)
    target_tiered = strategy.layout.is_tiered(level_no + 1, deepest)
    mode = ADD_NEW_RUN if target_tiered else ADD_SPLICE
    return job(victims, level_no + 1, targets, mode, covers_target=False)


# ---------------------------------------------------------------------------
# Execution


def _merge_slots_fast(engine, input_ids, purge: bool):
    """Vectorized merge over raw entry slots; None when key lengths vary."""
    cfg = engine.cfg
    mats = [load_slot_matrix(engine.reader(fid), cfg) for fid in input_ids]
    slots = np.vstack(mats) if len(mats) > 1 else np.ascontiguousarray(mats[0])
    klens = np.ascontiguousarray(slots[:, 0:2]).view("<u2").ravel()
    key_len = int(klens[0])
    if key_len == 0 or not (klens == key_len).all():
        return None
    keys = (
        np.ascontiguousarray(slots[:, ENTRY_HEADER_BYTES : ENTRY_HEADER_BYTES + key_len])
        .view(f"S{key_len}")
        .ravel()
    )
    seqs = np.ascontiguousarray(slots[:, 4:12]).view("<u8").ravel()
    # key ascending, then sequence number descending (newest version first)
    order = np.lexsort((np.uint64(2**64 - 1) - seqs, keys))
    sorted_keys = keys[order]
    newest = np.empty(len(order), dtype=bool)
    newest[0] = True
    newest[1:] = sorted_keys[1:] != sorted_keys[:-1]
    keep = newest
    if purge:
        kinds = slots[:, ENTRY_HEADER_BYTES - 1][order]
        keep = newest & (kinds != TOMBSTONE)
    selected = order[keep]
    return slots[selected], key_len, len(order) - len(selected)


def execute_compaction(engine, job: CompactionJob) -> CompactionResult:
    man = engine.manifest
    cfg = engine.cfg

    if job.pseudo:
        victims = [man.files[fid] for fid in job.victim_ids]
        edit = VersionEdit(
            removes=list(job.victim_ids),
            adds=[(job.target_level, job.add_mode, victims)],
        )
        man.apply(edit)
        engine.metrics.record_compaction(0, 0, 0, pseudo=True)
        return CompactionResult(0, 0, 0, list(job.victim_ids), pseudo=True)

    input_ids = job.victim_ids + job.target_ids
    input_metas = [man.files[fid] for fid in input_ids]
    input_entries = sum(m.entry_count for m in input_metas)
    input_pages = sum(m.data_pages for m in input_metas)

    ts_ticks = [
        m.oldest_tombstone_tick
        for m in input_metas
        if m.oldest_tombstone_tick is not None
    ]
    inherited_ts_tick = min(ts_ticks) if ts_ticks else None

    per_file = cfg.entries_per_file
    out_metas: list[SortedFileMeta] = []
    fast = _merge_slots_fast(engine, input_ids, job.purge)
    if fast is not None:
        out_slots, key_len, dropped = fast
        for start in range(0, len(out_slots), per_file):
            out_metas.append(
                engine.write_sorted_slots(
                    out_slots[start : start + per_file],
                    key_len,
                    job.target_level,
                    inherited_ts_tick,
                )
            )
    else:
        merged = heapq.merge(
            *(engine.reader(fid).iter_entries() for fid in input_ids),
            key=lambda e: (e[0], -e[1]),
        )
        chunk: list = []
        dropped = 0
        prev_key: bytes | None = None
        purge = job.purge
        for entry in merged:
            key = entry[0]
            if key == prev_key:
                dropped += 1
                continue
            prev_key = key
            if purge and entry[2] == TOMBSTONE:
                dropped += 1
                continue
            chunk.append(entry)
            if len(chunk) >= per_file:
                out_metas.append(
                    engine.write_sorted_file(chunk, job.target_level, inherited_ts_tick)
                )
                chunk = []
        if chunk:
            out_metas.append(
                engine.write_sorted_file(chunk, job.target_level, inherited_ts_tick)
            )

    out_entries = sum(m.entry_count for m in out_metas)
    out_pages = sum(m.data_pages for m in out_metas)
    bytes_read = input_entries * cfg.entry_bytes
    bytes_written = out_entries * cfg.entry_bytes

    edit = VersionEdit(
        removes=input_ids,
        adds=[(job.target_level, job.add_mode, out_metas)] if out_metas else [],
    )
    man.apply(edit)
    engine.forget_files(input_ids)

    pages = input_pages + out_pages
    engine.metrics.add_io_pages(pages)
    engine.metrics.record_compaction(bytes_read, bytes_written, pages, pseudo=False)
    if engine.debug_checks:
        man.check()
    return CompactionResult(
        bytes_read, bytes_written, dropped, [m.file_id for m in out_metas], False
    )


def run_until_quiescent(engine) -> int:
    """Drain the trigger/select/execute loop; returns the job count."""
    jobs = 0
    while True:
        fired = evaluate_triggers(engine)
        if not fired:
            return jobs
        level_no, trigger = fired[0]
        job = select_compaction(engine, level_no, trigger)
        execute_compaction(engine, job)
        jobs += 1
        man = engine.manifest
        # termination guard: every job shrinks a firing condition or moves
        # data deeper, so legitimate cascades are bounded by files x levels
        limit = 10 * max(man.deepest_nonempty_level(), 1) * max(len(man.files), 1)
        if jobs > limit:
            raise InvariantViolation(
                f"compaction loop did not settle after {jobs} jobs"
            )
