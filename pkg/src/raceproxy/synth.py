"""Synthetic multi-state voter populations with a known generative process.

Each state has a fixed block-level population (integer race counts per
block). A record is drawn by picking a (block, race) cell in proportion
to its count, then a surname, first name and middle name conditionally
on race. With ``violation > 0`` the surname is, with that probability,
replaced by a block-specific "local" surname, which breaks the
independence of surname and geography given race.

Because the process is finite and explicit, the exact posterior
P(race | surname, block, ...) can be computed by direct summation
(:func:`oracle_posterior`, :func:`oracle_grid`) and used as ground truth.
"""

import dataclasses
import math
import os
import string

import numpy as np
import pandas as pd

from .categories import N_RACES, RACE_NAMES
from .errors import ConfigurationError, DataError
from .ingest import Dataset, write_person_file
from .tables import geo_table_from_counts, surname_table_from_counts


@dataclasses.dataclass(frozen=True)
class StateSpec:
    code: str
    fips: str
    mixture: tuple
    n_records: int = 20_000
    n_tracts: int = 30
    blocks_per_tract: int = 8
    block_population: float = 60.0
    tract_concentration: float = 4.0
    block_concentration: float = 20.0
    #: optional (V, 5) surname weights replacing the spec-wide ones
    surname_weights: np.ndarray = None


@dataclasses.dataclass(frozen=True, eq=False)
class GenerativeSpec:
    """Vocabularies with (V, 5) unnormalized P(name | race) weights, and states."""

    states: tuple
    surnames: tuple
    surname_weights: np.ndarray
    first_names: tuple
    first_weights: np.ndarray
    middle_names: tuple
    middle_weights: np.ndarray
    middle_missing: float = 0.0
    violation: float = 0.0
    seed: int = 0

    def __post_init__(self):
        for name, weights, vocab in (("surname", self.surname_weights, self.surnames),
                                     ("first", self.first_weights, self.first_names),
                                     ("middle", self.middle_weights, self.middle_names)):
            w = np.asarray(weights, dtype=float)
            if w.shape != (len(vocab), N_RACES):
                raise ConfigurationError(f"{name} weights must be ({len(vocab)}, 5)")
            if not np.all(w > 0):
                raise ConfigurationError(f"{name} weights must be positive")
        for st in self.states:
            m = np.asarray(st.mixture, dtype=float)
            if m.shape != (N_RACES,) or np.any(m < 0) or m.sum() <= 0:
                raise ConfigurationError(f"state {st.code}: bad race mixture")
            if st.surname_weights is not None:
                w = np.asarray(st.surname_weights, dtype=float)
                if w.shape != (len(self.surnames), N_RACES) or not np.all(w > 0):
                    raise ConfigurationError(f"state {st.code}: bad surname weights")
        if not 0.0 <= self.violation <= 1.0:
            raise ConfigurationError("violation knob must be in [0, 1]")
        if not 0.0 <= self.middle_missing < 1.0:
            raise ConfigurationError("middle_missing must be in [0, 1)")
        codes = [s.code for s in self.states]
        if len(set(codes)) != len(codes):
            raise ConfigurationError("state codes must be distinct")

    def state(self, code):
        for st in self.states:
            if st.code == code:
                return st
        raise ConfigurationError(f"no state {code!r} in spec")

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_records(self, **n_records):
        """Copy with per-state record counts changed, e.g. ``SA=100_000``."""
        states = tuple(dataclasses.replace(s, n_records=n_records.get(s.code, s.n_records))
                       for s in self.states)
        return dataclasses.replace(self, states=states)


@dataclasses.dataclass(frozen=True, eq=False)
class Population:
    """Realized block composition of one state."""

    code: str
    block_ids: np.ndarray
    counts: np.ndarray        # (G, 5) integer people per block and race
    local_surname: np.ndarray  # (G, 5) vocabulary index used under violation
    p_surname: np.ndarray      # (V, 5) P(surname | race), columns sum to 1

    @property
    def tract_ids(self):
        return np.array([b[:11] for b in self.block_ids], dtype=object)


def _columns(weights):
    w = np.asarray(weights, dtype=float)
    return w / w.sum(axis=0)


def _letters(i, width=3):
    out = []
    for _ in range(width):
        i, r = divmod(i, 26)
        out.append(string.ascii_uppercase[r])
    return "".join(reversed(out))


def _dirichlet(rng, alpha):
    """Dirichlet draw that tolerates zero components (they stay zero)."""
    alpha = np.asarray(alpha, dtype=float)
    out = np.zeros_like(alpha)
    pos = alpha > 0
    draw = rng.gamma(alpha[pos])
    total = draw.sum()
    if total <= 0:
        out[pos] = alpha[pos] / alpha[pos].sum()
    else:
        out[pos] = draw / total
    return out


def _stream(spec, index, purpose):
    return np.random.default_rng(np.random.SeedSequence([spec.seed, index, purpose]))


def realize_population(spec, code):
    """Block composition for state ``code`` (deterministic given the spec seed)."""
    index = [s.code for s in spec.states].index(code)
    st = spec.states[index]
    rng = _stream(spec, index, 0)
    mixture = np.asarray(st.mixture, dtype=float)
    mixture = mixture / mixture.sum()
    n_blocks = st.n_tracts * st.blocks_per_tract
    expected = np.zeros((n_blocks, N_RACES))
    ids = []
    for t in range(st.n_tracts):
        tract_share = _dirichlet(rng, st.tract_concentration * mixture)
        for b in range(st.blocks_per_tract):
            share = _dirichlet(rng, st.block_concentration * tract_share)
            size = 1 + rng.poisson(st.block_population)
            expected[t * st.blocks_per_tract + b] = size * share
            ids.append(f"{st.fips}001{t + 1:04d}00{1001 + b:04d}")
    # rake race totals to the target mixture so state shares match the spec
    target = mixture * expected.sum()
    col = expected.sum(axis=0)
    scale = np.divide(target, col, out=np.zeros(N_RACES), where=col > 0)
    counts = np.rint(expected * scale)
    empty = counts.sum(axis=1) == 0
    counts[empty, np.argmax(expected[empty] * scale, axis=1)] = 1.0
    p_surname = _columns(st.surname_weights if st.surname_weights is not None
                         else spec.surname_weights)
    local = np.empty((n_blocks, N_RACES), dtype=np.intp)
    for r in range(N_RACES):
        local[:, r] = rng.choice(len(spec.surnames), size=n_blocks, p=p_surname[:, r])
    return Population(code=code, block_ids=np.array(ids, dtype=object),
                      counts=counts, local_surname=local, p_surname=p_surname)


def _sample_names(rng, race, p, size_vocab):
    out = np.empty(len(race), dtype=np.intp)
    for r in range(N_RACES):
        idx = np.flatnonzero(race == r)
        if idx.size:
            out[idx] = rng.choice(size_vocab, size=idx.size, p=p[:, r])
    return out


def sample_state(spec, code, population=None):
    """Draw the labelled records of one state."""
    index = [s.code for s in spec.states].index(code)
    st = spec.states[index]
    pop = population or realize_population(spec, code)
    rng = _stream(spec, index, 1)
    flat = pop.counts.ravel()
    cells = rng.choice(flat.size, size=st.n_records, p=flat / flat.sum())
    block, race = np.divmod(cells, N_RACES)

    surname = _sample_names(rng, race, pop.p_surname, len(spec.surnames))
    if spec.violation > 0:
        swap = rng.random(st.n_records) < spec.violation
        surname = np.where(swap, pop.local_surname[block, race], surname)
    first = _sample_names(rng, race, _columns(spec.first_weights), len(spec.first_names))
    middle = _sample_names(rng, race, _columns(spec.middle_weights), len(spec.middle_names))
    missing = rng.random(st.n_records) < spec.middle_missing

    def obj(values):
        arr = np.empty(len(values), dtype=object)
        arr[:] = values
        return arr

    sv = np.array(spec.surnames, dtype=object)
    fv = np.array(spec.first_names, dtype=object)
    mv = np.array(spec.middle_names, dtype=object)
    return Dataset(
        record_id=obj([f"{code}{i:08d}" for i in range(st.n_records)]),
        surname=sv[surname], first_name=fv[first],
        middle_name=np.where(missing, "", mv[middle]).astype(object),
        state=obj([code] * st.n_records), block_id=pop.block_ids[block],
        label=race.astype(np.int8), provenance=(code,))


def surname_expected_counts(spec, pop):
    """(V, 5) expected people per surname and race in ``pop``'s state."""
    totals = pop.counts.sum(axis=0)
    out = (1.0 - spec.violation) * pop.p_surname * totals
    if spec.violation > 0:
        for r in range(N_RACES):
            np.add.at(out[:, r], pop.local_surname[:, r],
                      spec.violation * pop.counts[:, r])
    return out


@dataclasses.dataclass
class SyntheticCorpus:
    spec: GenerativeSpec
    populations: dict
    datasets: dict

    def exact_tables(self):
        """National surname table and per-state block tables from exact counts.

        These match the tables built from the files :meth:`write` produces.
        """
        national = sum(surname_expected_counts(self.spec, pop)
                       for pop in self.populations.values())
        surnames = surname_table_from_counts(self.spec.surnames, national)
        geo = {code: geo_table_from_counts(pop.block_ids, pop.counts)
               for code, pop in self.populations.items()}
        return surnames, geo

    def write(self, directory):
        """Write person, block, surname and name frequency files.

        Returns a dict of logical name -> path.
        """
        os.makedirs(directory, exist_ok=True)
        paths = {}
        national = np.zeros((len(self.spec.surnames), N_RACES))
        people = np.zeros(N_RACES)
        for code, pop in self.populations.items():
            p = os.path.join(directory, f"persons_{code}.csv")
            write_person_file(self.datasets[code], p)
            paths[f"persons_{code}"] = p
            p = os.path.join(directory, f"blocks_{code}.csv")
            write_count_file(p, "block_id", pop.block_ids, pop.counts, integer=True)
            paths[f"blocks_{code}"] = p
            expected = surname_expected_counts(self.spec, pop)
            p = os.path.join(directory, f"surnames_{code}.csv")
            write_count_file(p, "name", self.spec.surnames, expected)
            paths[f"surnames_{code}"] = p
            national += expected
            people += pop.counts.sum(axis=0)
        p = os.path.join(directory, "surnames_national.csv")
        write_count_file(p, "name", self.spec.surnames, national)
        paths["surnames_national"] = p
        for slot, vocab, w in (("first", self.spec.first_names, self.spec.first_weights),
                               ("middle", self.spec.middle_names, self.spec.middle_weights)):
            p = os.path.join(directory, f"{slot}_names.csv")
            write_count_file(p, "name", vocab, _columns(w) * people)
            paths[f"{slot}_names"] = p
        return paths


def write_count_file(path, key, keys, counts, integer=False):
    """``key`` column plus one count column per race and a ``count`` total."""
    counts = np.asarray(counts, dtype=float)
    frame = pd.DataFrame({key: list(keys)})
    fmt = (lambda v: str(int(v))) if integer else repr
    for r, race in enumerate(RACE_NAMES):
        frame[race] = [fmt(float(v)) for v in counts[:, r]]
    frame["count"] = [fmt(float(v)) for v in counts.sum(axis=1)]
    frame.to_csv(path, index=False, lineterminator="\n")


def generate(spec):
    """Realize every state's population and sample its records."""
    pops = {st.code: realize_population(spec, st.code) for st in spec.states}
    data = {code: sample_state(spec, code, pop) for code, pop in pops.items()}
    return SyntheticCorpus(spec=spec, populations=pops, datasets=data)


# -- exact posterior ------------------------------------------------------------

def _index(vocab, name, what):
    try:
        return vocab.index(name)
    except ValueError:
        raise DataError(f"{what} {name!r} is outside the generative vocabulary") from None


def oracle_posterior(spec, code, surname, block_id, first=None, middle=None,
                     population=None):
    """Exact P(race | surname, block[, first][, middle]) by enumeration.

    ``None`` for a name means it was not observed, so it is summed out.
    Computed with plain Python floats, one race at a time.

    Raises
    ------
    DataError
        A name or block outside the spec, or a zero-probability cell.
    """
    pop = population or realize_population(spec, code)
    s = _index(spec.surnames, surname, "surname")
    block_list = pop.block_ids.tolist()
    g = _index(block_list, block_id, "block")
    pf = _columns(spec.first_weights)
    pm = _columns(spec.middle_weights)
    f = None if first is None else _index(spec.first_names, first, "first name")
    m = None if middle is None else _index(spec.middle_names, middle, "middle name")
    kappa = spec.violation
    joint = []
    for r in range(N_RACES):
        people = float(pop.counts[g, r])
        p_s = (1.0 - kappa) * float(pop.p_surname[s, r])
        if pop.local_surname[g, r] == s:
            p_s += kappa
        value = people * p_s
        if f is not None:
            value *= float(pf[f, r])
        if m is not None:
            value *= float(pm[m, r])
        joint.append(value)
    total = math.fsum(joint)
    if total <= 0:
        raise DataError(f"cell (surname={surname}, block={block_id}) has zero probability")
    return tuple(v / total for v in joint)


def oracle_grid(spec, code, population=None):
    """Exact posteriors for every (block, surname) cell: array (G, S, 5).

    Builds the joint table P(block, race, surname) and conditions on
    (block, surname) by summing over race.
    """
    pop = population or realize_population(spec, code)
    n_blocks = len(pop.block_ids)
    joint = np.empty((n_blocks, len(spec.surnames), N_RACES))
    joint[:] = (1.0 - spec.violation) * pop.p_surname[None, :, :]
    if spec.violation > 0:
        for r in range(N_RACES):
            joint[np.arange(n_blocks), pop.local_surname[:, r], r] += spec.violation
    joint *= pop.counts[:, None, :] / pop.counts.sum()
    return joint / joint.sum(axis=2, keepdims=True)


def oracle_matrix(spec, dataset, populations=None):
    """Exact posteriors for the records of ``dataset`` (all from spec states)."""
    out = np.empty((len(dataset), N_RACES))
    s_index = {n: i for i, n in enumerate(spec.surnames)}
    for code in np.unique(dataset.state.astype(str)):
        pop = (populations or {}).get(code) or realize_population(spec, code)
        rows = np.flatnonzero(dataset.state == code)
        grid = oracle_grid(spec, code, pop)
        b_index = {b: i for i, b in enumerate(pop.block_ids)}
        g = np.array([b_index[b] for b in dataset.block_id[rows]])
        s = np.array([s_index[n] for n in dataset.surname[rows]])
        out[rows] = grid[g, s]
    return out


def oracle_extended_matrix(spec, dataset, populations=None):
    """Exact posteriors given surname, block, first and middle (when present)."""
    base = oracle_matrix(spec, dataset, populations)
    pf = _columns(spec.first_weights)
    pm = _columns(spec.middle_weights)
    f_index = {n: i for i, n in enumerate(spec.first_names)}
    m_index = {n: i for i, n in enumerate(spec.middle_names)}
    f = np.array([f_index[n] for n in dataset.first_name])
    like = base * pf[f]
    has_m = dataset.middle_name != ""
    m = np.array([m_index.get(n, 0) for n in dataset.middle_name])
    like = np.where(has_m[:, None], like * pm[m], like)
    return like / like.sum(axis=1, keepdims=True)


# -- default specs --------------------------------------------------------------

def _vocab(prefix, n):
    return [f"{prefix}{_letters(i)}" for i in range(n)]


def _zipf(n, a=1.0):
    w = 1.0 / np.arange(1, n + 1) ** a
    return w / w.sum()


def _block_weights(groups, home_mass, leak=1e-4):
    """Weights where each race puts ``home_mass[r]`` on its home group(s).

    ``groups`` is a list of (size, home race or None); group names of a
    race are Zipf-weighted. The rest of each race's mass is spread
    uniformly over every name, so all weights stay positive.
    """
    V = sum(g[0] for g in groups)
    n_groups = np.bincount([g[1] for g in groups if g[1] is not None],
                           minlength=N_RACES)
    w = np.zeros((V, N_RACES))
    start = 0
    for size, home in groups:
        if home is not None:
            w[start:start + size, home] = home_mass[home] * _zipf(size) / n_groups[home]
        start += size
    for r in range(N_RACES):
        w[:, r] += (1.0 - w[:, r].sum()) / V + leak
    return w


def default_spec(seed=0, n_records=20_000, violation=0.0):
    """Four states with skewed mixtures.

    * SA: Asian share three times the others'
    * SB: large Black share
    * SC, SD: large Hispanic shares, with disjoint Hispanic surname sets
    """
    W, B, H, A, O = range(5)
    sur_groups = [(60, W), (40, B), (40, H), (40, H), (40, A), (30, None)]
    surnames = (_vocab("WHT", 60) + _vocab("BLK", 40) + _vocab("HSA", 40)
                + _vocab("HSB", 40) + _vocab("ASN", 40) + _vocab("CMN", 30))
    home = {W: 0.75, B: 0.55, H: 0.85, A: 0.85, O: 0.0}
    base = _block_weights(sur_groups, home)
    # Hispanic surname variants: first set only, second set only, or both
    h1 = slice(100, 140)
    h2 = slice(140, 180)

    def hispanic_only(keep, drop, floor=1e-5):
        w = base.copy()
        w[keep, H] += w[drop, H] - floor
        w[drop, H] = floor
        return w

    sur_c = hispanic_only(h1, h2)
    sur_d = hispanic_only(h2, h1)

    first_groups = [(50, W), (50, B), (50, H), (50, A), (40, None)]
    first = (_vocab("FW", 50) + _vocab("FB", 50) + _vocab("FH", 50)
             + _vocab("FA", 50) + _vocab("FC", 40))
    first_w = _block_weights(first_groups, {W: 0.5, B: 0.5, H: 0.7, A: 0.75, O: 0.0})
    middle_groups = [(30, W), (30, B), (30, H), (30, A), (40, None)]
    middle = (_vocab("MW", 30) + _vocab("MB", 30) + _vocab("MH", 30)
              + _vocab("MA", 30) + _vocab("MC", 40))
    middle_w = _block_weights(middle_groups, {W: 0.3, B: 0.3, H: 0.5, A: 0.5, O: 0.0})

    states = (
        StateSpec("SA", "91", (0.48, 0.08, 0.14, 0.18, 0.12), n_records),
        StateSpec("SB", "92", (0.53, 0.31, 0.04, 0.06, 0.06), n_records),
        StateSpec("SC", "93", (0.57, 0.12, 0.20, 0.06, 0.05), n_records,
                  surname_weights=sur_c),
        StateSpec("SD", "94", (0.52, 0.10, 0.26, 0.06, 0.06), n_records,
                  surname_weights=sur_d),
    )
    return GenerativeSpec(states=states, surnames=tuple(surnames), surname_weights=base,
                          first_names=tuple(first), first_weights=first_w,
                          middle_names=tuple(middle), middle_weights=middle_w,
                          middle_missing=0.15, violation=violation, seed=seed)


def micro_spec(seed=0, violation=0.0):
    """Two small states for exhaustive extended-posterior checks (< 2,000 cells)."""
    rng = np.random.default_rng(seed + 12345)
    surnames = tuple(_vocab("S", 5))
    first = tuple(_vocab("F", 5))
    middle = tuple(_vocab("M", 4))
    states = (
        StateSpec("MA", "81", (0.4, 0.2, 0.2, 0.1, 0.1), 2_000, n_tracts=2,
                  blocks_per_tract=4, block_population=30),
        StateSpec("MB", "82", (0.3, 0.3, 0.2, 0.1, 0.1), 2_000, n_tracts=2,
                  blocks_per_tract=4, block_population=30),
    )
    return GenerativeSpec(states=states, surnames=surnames,
                          surname_weights=rng.uniform(0.05, 1.0, (5, 5)),
                          first_names=first, first_weights=rng.uniform(0.05, 1.0, (5, 5)),
                          middle_names=middle,
                          middle_weights=rng.uniform(0.05, 1.0, (4, 5)),
                          violation=violation, seed=seed)


def informative_first_name_races(spec, threshold=0.3):
    """Races whose first-name distribution differs from the others' by TV > threshold."""
    p = _columns(spec.first_weights)
    out = []
    for r in range(N_RACES):
        rest = np.delete(p, r, axis=1).mean(axis=1)
        if 0.5 * np.abs(p[:, r] - rest).sum() > threshold:
            out.append(r)
    return out
