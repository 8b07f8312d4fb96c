"""Adaptive mode selection: LEARN, the SPA outer loop, and baselines.

LEARN is a batched weighted-experts procedure over a candidate mode set:
each batch transmits l frames per admissible mode, penalizes weights
exponentially in the observed batch FER, applies a fixed-share style
redistribution controlled by alpha, and early-rejects modes whose
normalized weight falls to epsilon or below. SPA wraps LEARN with a
windowed-FER trigger and a ranked memory of all modes, re-learning over
only the top r entries at each trigger. The baseline policies (BRUTE,
RandPick, PWR2, NRNM, WRNM) share SPA's trigger mechanism and differ in
how they pick the next operating mode.
"""
import math
from collections import deque
from dataclasses import dataclass, field, replace

from .netsim import Mode, mode_key_str


class DegenerateSetError(ValueError):
    """weight_update needs at least two admissible modes."""


class InsufficientHistoryError(ValueError):
    """Fewer frames available than the FER window."""


class UnknownPolicyError(ValueError):
    pass


class RunStopped(Exception):
    """Raised by a frame executor to end a policy run early (e.g. the
    replayed sample or the packet stream is exhausted)."""


@dataclass(frozen=True)
class LearnParams:
    """LEARN knobs: batch size l (frames per mode per batch), learning
    rate eta, shift parameter alpha, reject threshold epsilon, max
    batches B."""
    l: int = 1
    eta: float = 3.0
    alpha: float = 0.4
    epsilon: float = 0.05
    B: int = 50

    def __post_init__(self):
        if self.l < 1:
            raise ValueError(f"l must be >= 1, got {self.l}")
        if not self.eta > 0:
            raise ValueError(f"eta must be positive, got {self.eta}")
        if not 0.0 <= self.alpha < 1.0:
            raise ValueError(f"alpha must be in [0, 1), got {self.alpha}")
        if not 0.0 <= self.epsilon < 1.0:
            raise ValueError(f"epsilon must be in [0, 1), got {self.epsilon}")
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")


@dataclass(frozen=True)
class SpaParams:
    """SPA knobs: FER trigger threshold zeta, memory size r, FER window w,
    window step delta_w, minimum window count s, nested LEARN params."""
    zeta: float = 0.1
    r: int = 3
    w: int = 40
    delta_w: int = 1
    s: int = 3
    learn: LearnParams = field(default_factory=LearnParams)

    def __post_init__(self):
        if not 0.0 < self.zeta <= 1.0:
            raise ValueError(f"zeta must be in (0, 1], got {self.zeta}")
        if self.r < 1:
            raise ValueError(f"r must be >= 1, got {self.r}")
        if self.w < 1 or self.delta_w < 1:
            raise ValueError("w and delta_w must be >= 1")
        if self.s < 0:
            raise ValueError(f"s must be >= 0, got {self.s}")


DEFAULT_PARAMS = SpaParams()

BASELINE_POLICIES = ("DT", "BRUTE", "RandPick", "PWR2", "NRNM", "WRNM", "SPA")


@dataclass(frozen=True)
class RankedModeList:
    """Permutation of a mode set, best first, with the most recent
    normalized learner weights (0 for modes never learned)."""
    order: tuple
    weights: dict

    def __post_init__(self):
        if len(set(self.order)) != len(self.order):
            raise ValueError("ranked order contains duplicates")


@dataclass
class FrameRecord:
    mode: object          # Mode or None for plain direct transmission
    category: int
    phase: str            # "operating" | "learning"


@dataclass
class LearnCall:
    start_frame: int
    end_frame: int
    candidates: tuple
    ranked: tuple


@dataclass
class PolicyRunLog:
    """Per-frame record of a policy run plus trigger/LEARN bookkeeping."""
    policy: str
    frames: list = field(default_factory=list)
    triggers: list = field(default_factory=list)
    learn_calls: list = field(default_factory=list)

    @property
    def n_frames(self):
        return len(self.frames)

    @property
    def fer(self):
        if not self.frames:
            return 0.0
        return sum(1 for f in self.frames if f.category == 2) / len(self.frames)

    @property
    def switch_count(self):
        return sum(1 for a, b in zip(self.frames, self.frames[1:]) if a.mode != b.mode)

    def to_rows(self):
        """CSV rows: frame_index, mode, category, phase, cumulative_switches."""
        rows = []
        switches = 0
        prev = None
        for i, f in enumerate(self.frames):
            if i > 0 and f.mode != prev:
                switches += 1
            prev = f.mode
            rows.append([i, mode_key_str(f.mode), f.category, f.phase, switches])
        return rows


def weight_update(weights, fers, eta, alpha):
    """Two-pass experts update; returns unnormalized weights.

    Pass 1 applies the exponential penalty w_i *= exp(-eta * f_i) and
    accumulates the shared pool P = sum (1 - (1-alpha)^{f_i}) w_i over the
    penalized weights. Pass 2 redistributes the pool:

        w_i <- (1-alpha)^{f_i} w_i + (P - (1 - (1-alpha)^{f_i}) w_i) / (n-1)

    with n the number of admissible modes.
    """
    n = len(weights)
    if n < 2:
        raise DegenerateSetError(f"need at least 2 modes, got {n}")
    if len(fers) != n:
        raise ValueError("weights and fers must have equal length")
    if any(not 0.0 <= f <= 1.0 for f in fers):
        raise ValueError("empirical FERs must lie in [0, 1]")
    penalized = [w * math.exp(-eta * f) for w, f in zip(weights, fers)]
    shares = [1.0 - (1.0 - alpha) ** f for f in fers]
    pool = sum(s * w for s, w in zip(shares, penalized))
    return [(1.0 - s) * w + (pool - s * w) / (n - 1)
            for s, w in zip(shares, penalized)]


def learn(runner, candidates, params):
    """Rank candidate modes by batched weighted-experts learning.

    runner(mode, n) must transmit n frames on the mode and return the
    empirical FER of those frames. Batches continue while more than one
    mode is admissible and fewer than B batches have run; after each
    batch, weights are updated and normalized, then modes are scanned in
    ascending weight order (ties stable by current candidate order) and
    those at or below epsilon are rejected, earliest rejection ranking
    lowest. A rejected mode receives no further frames. Survivor weights
    are renormalized to sum to 1 on exit.
    """
    candidates = list(candidates)
    if not candidates:
        raise ValueError("candidates must be nonempty")
    if len(set(candidates)) != len(candidates):
        raise ValueError("candidates must be distinct")
    weights = {m: 1.0 / len(candidates) for m in candidates}
    if len(candidates) == 1:
        return RankedModeList(order=tuple(candidates), weights={candidates[0]: 1.0})

    admissible = list(candidates)
    rejected = []
    batch = 0
    while len(admissible) > 1 and batch < params.B:
        fers = {m: runner(m, params.l) for m in admissible}
        updated = weight_update([weights[m] for m in admissible],
                                [fers[m] for m in admissible],
                                params.eta, params.alpha)
        total = sum(updated)
        for m, w in zip(admissible, updated):
            weights[m] = w / total
        keep = []
        for m in sorted(admissible, key=lambda m: weights[m]):
            if weights[m] > params.epsilon:
                keep.append(m)
            else:
                rejected.append(m)
        admissible = [m for m in admissible if m in keep]
        batch += 1

    survivors = sorted(admissible, key=lambda m: weights[m])
    if survivors:
        # keep the surviving set a distribution (rejected mass is dropped)
        surv_total = sum(weights[m] for m in survivors)
        for m in survivors:
            weights[m] /= surv_total
    order = tuple(reversed(rejected + survivors))
    return RankedModeList(order=order, weights={m: weights[m] for m in candidates})


def windowed_fer(categories, w):
    """Fraction of the last w outcome categories that are failures (2)."""
    if len(categories) < w:
        raise InsufficientHistoryError(
            f"need at least {w} frames, have {len(categories)}")
    recent = list(categories)[-w:]
    return sum(1 for c in recent if c == 2) / w


class _Budget(Exception):
    """Internal: total-frame budget reached."""


class _FrameLoop:
    """Sends frames through the executor, recording them into the log and
    enforcing the total-frame budget."""

    def __init__(self, executor, total_frames, log):
        self.executor = executor
        self.total_frames = total_frames
        self.log = log

    def send(self, mode, phase):
        if len(self.log.frames) >= self.total_frames:
            raise _Budget
        category = self.executor(mode)
        self.log.frames.append(FrameRecord(mode, int(category), phase))
        return int(category)


def _operate_until_trigger(loop, mode, params):
    """Run the current mode for w frames, then extend by delta_w until the
    windowed FER reaches zeta. Returns the number of extensions i."""
    window = deque(maxlen=params.w)
    for _ in range(params.w):
        window.append(loop.send(mode, "operating"))
    i = 0
    while sum(1 for c in window if c == 2) / params.w < params.zeta:
        for _ in range(params.delta_w):
            window.append(loop.send(mode, "operating"))
        i += 1
    return i


def _learn_runner(loop):
    def runner(mode, n):
        cats = [loop.send(mode, "learning") for _ in range(n)]
        return sum(1 for c in cats if c == 2) / len(cats)
    return runner


def _measure(loop, mode, n):
    cats = [loop.send(mode, "learning") for _ in range(n)]
    return sum(1 for c in cats if c == 2) / len(cats)


def spa(executor, all_modes, params=DEFAULT_PARAMS, total_frames=10_000, log=None):
    """SPA: operate the top-ranked mode, re-learn over the top r on trigger.

    The ranked list L starts in enumeration order. On a trigger after i
    window extensions, the top r modes rotate to the end when i <= s
    (burst of triggers: the whole partition looks bad), otherwise only the
    top mode does; LEARN then reranks the new top r in place.
    """
    if len(all_modes) < params.r:
        raise ValueError(f"need |modes| >= r, got {len(all_modes)} < {params.r}")
    log = log if log is not None else PolicyRunLog("SPA")
    loop = _FrameLoop(executor, total_frames, log)
    ranked = list(all_modes)
    runner = _learn_runner(loop)
    try:
        while True:
            i = _operate_until_trigger(loop, ranked[0], params)
            log.triggers.append(len(log.frames))
            if i <= params.s:
                ranked = ranked[params.r:] + ranked[:params.r]
            else:
                ranked = ranked[1:] + ranked[:1]
            start = len(log.frames)
            candidates = tuple(ranked[:params.r])
            result = learn(runner, candidates, params.learn)
            ranked[:params.r] = result.order
            log.learn_calls.append(LearnCall(start, len(log.frames),
                                             candidates, result.order))
    except (_Budget, RunStopped):
        pass
    return log


def _run_flat(executor, mode, total_frames, log):
    loop = _FrameLoop(executor, total_frames, log)
    try:
        while True:
            loop.send(mode, "operating")
    except (_Budget, RunStopped):
        pass
    return log


def _run_triggered(executor, all_modes, params, total_frames, log, adapt):
    """Shared trigger loop for the non-SPA adaptive baselines: operate the
    current mode until the windowed FER trips, then ask adapt() for the
    next operating mode."""
    loop = _FrameLoop(executor, total_frames, log)
    current = all_modes[0]
    try:
        while True:
            _operate_until_trigger(loop, current, params)
            log.triggers.append(len(log.frames))
            current = adapt(loop)
    except (_Budget, RunStopped):
        pass
    return log


def run_policy(policy, executor, all_modes, params=DEFAULT_PARAMS,
               total_frames=10_000, rng=None, brute_frames=None):
    """Run one selection policy and return its PolicyRunLog.

    policy is one of "DT", "BRUTE", "RandPick", "PWR2", "NRNM", "WRNM",
    "SPA", a Mode instance (fixed mode), or "Fixed:<mode>". RandPick and
    PWR2 need rng. brute_frames is the per-mode measurement length of
    BRUTE/PWR2 (defaults to the FER window w).
    """
    modes = list(all_modes)
    frames_per_probe = params.w if brute_frames is None else int(brute_frames)

    if isinstance(policy, Mode):
        return _run_flat(executor, policy, total_frames, PolicyRunLog(f"Fixed:{policy}"))
    name = str(policy)
    if name.lower().startswith("fixed:"):
        mode = Mode.parse(name.split(":", 1)[1])
        return _run_flat(executor, mode, total_frames, PolicyRunLog(f"Fixed:{mode}"))
    key = name.upper()
    if key == "DT":
        return _run_flat(executor, None, total_frames, PolicyRunLog("DT"))
    if key == "SPA":
        return spa(executor, modes, params, total_frames, PolicyRunLog("SPA"))

    if key == "BRUTE":
        def adapt(loop):
            fers = [(_measure(loop, m, frames_per_probe), i) for i, m in enumerate(modes)]
            return modes[min(fers)[1]]
    elif key == "RANDPICK":
        if rng is None:
            raise ValueError("RandPick needs rng")
        def adapt(loop):
            return modes[int(rng.integers(len(modes)))]
    elif key == "PWR2":
        if rng is None:
            raise ValueError("PWR2 needs rng")
        def adapt(loop):
            i, j = rng.choice(len(modes), size=2, replace=False)
            pair = [modes[int(i)], modes[int(j)]]
            fers = [(_measure(loop, m, frames_per_probe), p) for p, m in enumerate(pair)]
            return pair[min(fers)[1]]
    elif key in ("NRNM", "WRNM"):
        lp = params.learn if key == "WRNM" else replace(params.learn, epsilon=0.0)
        def adapt(loop):
            start = len(loop.log.frames)
            result = learn(_learn_runner(loop), modes, lp)
            loop.log.learn_calls.append(LearnCall(start, len(loop.log.frames),
                                                  tuple(modes), result.order))
            return result.order[0]
    else:
        raise UnknownPolicyError(f"unknown policy {policy!r}")

    log = PolicyRunLog(key if key != "RANDPICK" else "RandPick")
    return _run_triggered(executor, modes, params, total_frames, log, adapt)
