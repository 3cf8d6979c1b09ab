"""Irregular LDPC codes and the detector <-> decoder message schedule.

Codes are built from edge-perspective degree distributions with a
configuration-model socket matching, followed by swap repair of duplicate
edges and 4-cycles and a full-rank check.  Encoding is systematic through a
GF(2) elimination of the parity matrix; decoding is flooding sum-product with
tanh-rule check updates.  `joint_receive` alternates the mixture detector and
the decoder, exchanging extrinsic log-likelihood ratios.

LLR convention: positive favors bit 0, which maps to BPSK symbol +1
(bit b -> symbol 1 - 2b).  All LLR vectors are clamped to +-50.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .detector import DetectorConfig, detect_frame

__all__ = [
    "CodeSpec",
    "SparseParityMatrix",
    "Schedule",
    "JointResult",
    "ConstructionFailed",
    "RankDeficient",
    "code_500_250",
    "construct_code",
    "encode",
    "decode",
    "joint_receive",
    "to_alist",
    "from_alist",
    "LLR_CLAMP",
]

LLR_CLAMP = 50.0


class ConstructionFailed(RuntimeError):
    """No satisfactory parity matrix within the retry budget."""


class RankDeficient(np.linalg.LinAlgError):
    """Parity matrix rows are linearly dependent over GF(2)."""


@dataclass
class CodeSpec:
    """Code size plus edge-perspective degree distributions."""

    n: int
    k: int
    var_degrees: dict[int, float]  # fraction of edges touching degree-d variables
    chk_degrees: dict[int, float]  # fraction of edges touching degree-d checks

    def __post_init__(self):
        if not 0 < self.k < self.n:
            raise ValueError("need 0 < k < n")
        for dist in (self.var_degrees, self.chk_degrees):
            if abs(sum(dist.values()) - 1.0) > 1e-6:
                raise ValueError("degree fractions must sum to 1")
            if any(d < 1 for d in dist):
                raise ValueError("degrees must be >= 1")

    def mean_var_degree(self) -> float:
        return 1.0 / sum(f / d for d, f in self.var_degrees.items())

    def mean_chk_degree(self) -> float:
        return 1.0 / sum(f / d for d, f in self.chk_degrees.items())


def code_500_250() -> CodeSpec:
    """The rate-1/2 irregular profile used by the coded experiments."""
    return CodeSpec(
        n=500,
        k=250,
        var_degrees={3: 0.9867, 4: 0.0133},
        chk_degrees={4: 0.0027, 5: 0.0565, 6: 0.8332, 7: 0.1023, 8: 0.0053},
    )


@dataclass
class Schedule:
    """i_det extrinsic exchanges, i_dec decoder iterations per exchange."""

    i_det: int
    i_dec: int

    def __post_init__(self):
        if self.i_det < 1 or self.i_dec < 1:
            raise ValueError("schedule counts must be >= 1")


@dataclass
class SparseParityMatrix:
    rows: int
    cols: int
    adjacency: list[np.ndarray]  # per-check sorted variable indices

    _codec: tuple | None = field(default=None, repr=False, compare=False)
    _decoder: tuple | None = field(default=None, repr=False, compare=False)

    def var_degrees(self) -> np.ndarray:
        deg = np.zeros(self.cols, dtype=int)
        for row in self.adjacency:
            deg[row] += 1
        return deg

    def chk_degrees(self) -> np.ndarray:
        return np.array([len(row) for row in self.adjacency])

    def dense(self) -> np.ndarray:
        h = np.zeros((self.rows, self.cols), dtype=bool)
        for r, row in enumerate(self.adjacency):
            h[r, row] = True
        return h

    def syndrome(self, bits: np.ndarray) -> np.ndarray:
        bits = np.asarray(bits, dtype=int)
        return np.array([bits[row].sum() % 2 for row in self.adjacency], dtype=int)

    @property
    def info_positions(self) -> np.ndarray:
        """Columns that carry information bits under systematic encoding."""
        return _codec_tables(self)[1]


def _node_counts(edge_fracs: dict[int, float], total: int) -> dict[int, int]:
    """Edge-perspective fractions -> integer node counts (largest remainder)."""
    degs = sorted(edge_fracs)
    raw = np.array([edge_fracs[d] / d for d in degs])
    raw = raw / raw.sum() * total
    counts = np.floor(raw).astype(int)
    rema = raw - counts
    for i in np.argsort(-rema, kind="stable")[: total - counts.sum()]:
        counts[i] += 1
    return {d: int(c) for d, c in zip(degs, counts) if c > 0}


def _degree_sequence(counts: dict[int, int]) -> np.ndarray:
    return np.concatenate([np.full(c, d, dtype=int) for d, c in sorted(counts.items())])


def _gf2_rank(dense: np.ndarray) -> int:
    h = dense.copy()
    rank = 0
    m, n = h.shape
    for col in range(n):
        hot = np.flatnonzero(h[rank:, col]) + rank
        if hot.size == 0:
            continue
        if hot[0] != rank:
            h[[rank, hot[0]]] = h[[hot[0], rank]]
        for r in np.flatnonzero(h[:, col]):
            if r != rank:
                h[r] ^= h[rank]
        rank += 1
        if rank == m:
            break
    return rank


def _attempt_graph(rng, var_deg, chk_deg, max_passes=30):
    """Socket matching plus guarded swap repair; per-check adjacency or None."""
    n_edges = int(var_deg.sum())
    n_chk = len(chk_deg)
    var_of_edge = np.repeat(np.arange(len(var_deg)), var_deg)
    chk_of_edge = np.repeat(np.arange(n_chk), chk_deg)[rng.permutation(n_edges)]

    adj = [set() for _ in range(n_chk)]
    duplicates = []
    for e in range(n_edges):
        c, v = int(chk_of_edge[e]), int(var_of_edge[e])
        if v in adj[c]:
            duplicates.append(e)
        else:
            adj[c].add(v)

    # Re-home duplicate edges by swapping check endpoints with a random edge.
    for e in duplicates:
        for _ in range(200):
            partner = int(rng.integers(n_edges))
            c_e, c_p = int(chk_of_edge[e]), int(chk_of_edge[partner])
            v_e, v_p = int(var_of_edge[e]), int(var_of_edge[partner])
            if partner == e or c_e == c_p or v_e in adj[c_p] or v_p in adj[c_e]:
                continue
            adj[c_p].discard(v_p)
            adj[c_p].add(v_e)
            adj[c_e].add(v_p)  # the duplicate copy of v_e stays via its twin
            chk_of_edge[e], chk_of_edge[partner] = c_p, c_e
            break
        else:
            return None

    def guarded_swap(e: int) -> bool:
        for _ in range(50):
            partner = int(rng.integers(n_edges))
            c_e, c_p = int(chk_of_edge[e]), int(chk_of_edge[partner])
            v_e, v_p = int(var_of_edge[e]), int(var_of_edge[partner])
            if partner == e or c_e == c_p or v_e in adj[c_p] or v_p in adj[c_e]:
                continue
            adj[c_e].discard(v_e)
            adj[c_e].add(v_p)
            adj[c_p].discard(v_p)
            adj[c_p].add(v_e)
            chk_of_edge[e], chk_of_edge[partner] = c_p, c_e
            return True
        return False

    # Break 4-cycles (two checks sharing two variables) where possible.
    for _ in range(max_passes):
        var_edges: list[list[int]] = [[] for _ in range(len(var_deg))]
        for e in range(n_edges):
            var_edges[var_of_edge[e]].append(e)
        pair_owner: dict[tuple[int, int], int] = {}
        bad: list[int] = []
        for edges in var_edges:
            checks = sorted((int(chk_of_edge[e]), e) for e in edges)
            for ii in range(len(checks)):
                for jj in range(ii + 1, len(checks)):
                    key = (checks[ii][0], checks[jj][0])
                    if key in pair_owner:
                        bad.append(checks[jj][1])
                    else:
                        pair_owner[key] = checks[jj][1]
        if not bad:
            break
        moved = False
        for e in bad:
            moved = guarded_swap(e) or moved
        if not moved:
            break

    adjacency = [[] for _ in range(n_chk)]
    for e in range(n_edges):
        adjacency[chk_of_edge[e]].append(int(var_of_edge[e]))
    if any(len(set(row)) != len(row) for row in adjacency):
        return None
    return [np.array(sorted(row), dtype=np.int64) for row in adjacency]


def construct_code(seed: int, spec: CodeSpec, max_tries: int = 64) -> SparseParityMatrix:
    """Random degree-matched parity matrix: no duplicate edges, 4-cycles
    swapped out where possible, full row rank; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    m = spec.n - spec.k
    var_deg = _degree_sequence(_node_counts(spec.var_degrees, spec.n))
    chk_deg = _degree_sequence(_node_counts(spec.chk_degrees, m))
    # Balance the two socket totals by resizing check degrees within rounding.
    diff = int(var_deg.sum() - chk_deg.sum())
    order = np.argsort(-chk_deg, kind="stable")
    idx = 0
    while diff != 0:
        j = order[idx % m]
        step = 1 if diff > 0 else -1
        if chk_deg[j] + step >= 1:
            chk_deg[j] += step
            diff -= step
        idx += 1

    for _ in range(max_tries):
        adjacency = _attempt_graph(rng, var_deg, chk_deg)
        if adjacency is None:
            continue
        mat = SparseParityMatrix(m, spec.n, adjacency)
        if _gf2_rank(mat.dense()) == m:
            return mat
    raise ConstructionFailed(f"no full-rank graph in {max_tries} tries")


def _codec_tables(h: SparseParityMatrix):
    """(pivot columns, info columns, parity generator) for systematic encoding."""
    if h._codec is None:
        dense = h.dense()
        m, n = dense.shape
        work = dense.copy()
        pivots = []
        row = 0
        for col in range(n):
            hot = np.flatnonzero(work[row:, col]) + row
            if hot.size == 0:
                continue
            if hot[0] != row:
                work[[row, hot[0]]] = work[[hot[0], row]]
            for r in np.flatnonzero(work[:, col]):
                if r != row:
                    work[r] ^= work[row]
            pivots.append(col)
            row += 1
            if row == m:
                break
        if row < m:
            raise RankDeficient(f"rank {row} < {m}")
        pivots = np.array(pivots)
        info = np.setdiff1d(np.arange(n), pivots)
        h._codec = (pivots, info, work[:, info])
    return h._codec


def encode(h: SparseParityMatrix, info_bits: np.ndarray) -> np.ndarray:
    """Systematic codeword with H c = 0; info bits sit at h.info_positions."""
    pivots, info, gen = _codec_tables(h)
    u = np.asarray(info_bits, dtype=int)
    if u.shape != (len(info),):
        raise ValueError(f"expected {len(info)} info bits")
    cw = np.zeros(h.cols, dtype=np.int8)
    cw[info] = u
    cw[pivots] = (gen @ u) % 2
    return cw


def _decoder_tables(h: SparseParityMatrix):
    if h._decoder is None:
        chk_of_edge = np.concatenate(
            [np.full(len(row), c) for c, row in enumerate(h.adjacency)]
        )
        var_of_edge = np.concatenate(h.adjacency)
        n_edges = len(var_of_edge)
        max_dc = max(len(row) for row in h.adjacency)
        edge_slot = np.full((h.rows, max_dc), -1, dtype=np.int64)
        pos = 0
        for c, row in enumerate(h.adjacency):
            edge_slot[c, : len(row)] = np.arange(pos, pos + len(row))
            pos += len(row)
        h._decoder = (chk_of_edge, var_of_edge, edge_slot, n_edges)
    return h._decoder


def decode(
    h: SparseParityMatrix, llr_in: np.ndarray, iters: int
) -> tuple[np.ndarray, np.ndarray, bool]:
    """Flooding sum-product; returns (posterior, extrinsic, syndrome-ok).

    The extrinsic vector is exactly posterior - input (the identity holds by
    construction); decoding stops early once the hard decision satisfies
    every check.
    """
    chk_of_edge, var_of_edge, edge_slot, n_edges = _decoder_tables(h)
    llr_in = np.clip(np.asarray(llr_in, dtype=float), -LLR_CLAMP, LLR_CLAMP)
    if llr_in.shape != (h.cols,):
        raise ValueError(f"expected {h.cols} LLRs")
    slot_ok = edge_slot >= 0
    r = np.zeros(n_edges)  # check -> variable messages
    ext = np.zeros(h.cols)
    valid = False
    for _ in range(max(1, iters)):
        var_sum = np.bincount(var_of_edge, weights=r, minlength=h.cols)
        q = (llr_in + var_sum)[var_of_edge] - r
        t = np.tanh(np.clip(q, -LLR_CLAMP, LLR_CLAMP) / 2.0)
        t_pad = np.ones(edge_slot.shape)
        t_pad[slot_ok] = t[edge_slot[slot_ok]]
        fwd = np.cumprod(np.concatenate([np.ones((h.rows, 1)), t_pad[:, :-1]], axis=1), axis=1)
        bwd = np.cumprod(
            np.concatenate([np.ones((h.rows, 1)), t_pad[:, :0:-1]], axis=1), axis=1
        )[:, ::-1]
        excl = np.clip(fwd * bwd, -1 + 1e-15, 1 - 1e-15)
        r = np.empty(n_edges)
        r[edge_slot[slot_ok]] = 2.0 * np.arctanh(excl[slot_ok])
        ext = np.clip(
            np.bincount(var_of_edge, weights=r, minlength=h.cols), -LLR_CLAMP, LLR_CLAMP
        )
        hard = (llr_in + ext) < 0
        if not np.any(np.bincount(chk_of_edge, weights=hard[var_of_edge]) % 2):
            valid = True
            break
    llr_post = llr_in + ext
    return llr_post, ext, valid


@dataclass
class JointResult:
    info_bits: np.ndarray
    codeword_bits: np.ndarray
    valid: bool
    exchanges: int
    detector_fallbacks: int


def joint_receive(
    y: np.ndarray,
    pilots: np.ndarray,
    h: SparseParityMatrix,
    cfg: DetectorConfig,
    sched: Schedule,
) -> JointResult:
    """Iterative detection and decoding of one coded frame.

    Codeword bits occupy the data positions in transmission order.  Each
    exchange runs the detector with the decoder's extrinsic LLRs as symbol
    priors, hands the detector's extrinsic LLRs to a fresh sum-product run,
    and stops early once the syndrome clears.  Schedule (1, i_dec) is plain
    separate detection-then-decoding.
    """
    pilots = np.asarray(pilots, dtype=bool)
    data_pos = np.flatnonzero(~pilots)
    if len(data_pos) != h.cols:
        raise ValueError(f"frame carries {len(data_pos)} data symbols, code needs {h.cols}")

    dec_ext = np.zeros(h.cols)
    fallbacks = 0
    exchanges = 0
    llr_post = np.zeros(h.cols)
    valid = False
    for exchanges in range(1, sched.i_det + 1):
        priors = np.where(pilots, 1.0, 0.5)
        priors[data_pos] = expit(dec_ext)
        out = detect_frame(y, priors, cfg, channel_posterior=False)
        fallbacks += out.fusion_fallbacks
        p = np.clip(out.post_x[data_pos], 1e-12, 1.0 - 1e-12)
        det_ext = np.clip(np.log(p / (1.0 - p)) - dec_ext, -LLR_CLAMP, LLR_CLAMP)
        llr_post, dec_ext, valid = decode(h, det_ext, sched.i_dec)
        if valid:
            break
    bits = (llr_post < 0).astype(np.int8)
    return JointResult(bits[h.info_positions], bits, valid, exchanges, fallbacks)


def to_alist(h: SparseParityMatrix) -> str:
    """Serialize to the plain-text alist interchange format (1-based)."""
    var_adj: list[list[int]] = [[] for _ in range(h.cols)]
    for c, row in enumerate(h.adjacency):
        for v in row:
            var_adj[v].append(c)
    dv = [len(a) for a in var_adj]
    dc = [len(row) for row in h.adjacency]
    max_dv, max_dc = max(dv), max(dc)
    lines = [
        f"{h.cols} {h.rows}",
        f"{max_dv} {max_dc}",
        " ".join(map(str, dv)),
        " ".join(map(str, dc)),
    ]
    for a in var_adj:
        entries = [str(c + 1) for c in a] + ["0"] * (max_dv - len(a))
        lines.append(" ".join(entries))
    for row in h.adjacency:
        entries = [str(v + 1) for v in row] + ["0"] * (max_dc - len(row))
        lines.append(" ".join(entries))
    return "\n".join(lines) + "\n"


def from_alist(text: str) -> SparseParityMatrix:
    """Parse an alist string (padded or unpadded variant)."""
    rows = [line.split() for line in text.strip().splitlines() if line.strip()]
    n, m = int(rows[0][0]), int(rows[0][1])
    chk_lines = rows[4 + n : 4 + n + m]
    adjacency = [
        np.array(sorted(int(tok) - 1 for tok in line if tok != "0"), dtype=np.int64)
        for line in chk_lines
    ]
    return SparseParityMatrix(m, n, adjacency)
