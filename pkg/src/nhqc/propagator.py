"""Sequential short-time propagation of the pair-trajectory ensemble.

Each sampled bath point spawns one member per nonzero initial adiabatic
element (alpha, alpha').  A member advects classically on the mean of its
two adiabatic surfaces while accumulating the frequency integral of its
phase factor and the damping integral of its decay factor (trapezoid over
each step, consistent with the second-order step splitting).  In
nonadiabatic mode a single stochastic transition per member per step is
sampled from the derivative-coupling and off-diagonal-decay channels, with
importance reweighting and the momentum-jump rule.

The vectorized engine below propagates all members of a sample block at
once using the closed-form block frames; the single-member functions
(`classical_step`, `sstp_step`, `momentum_jump`) are the plain re-statement
of the same algorithm on the generic eigensolver route and serve as its
cross-check.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .adiabatic import (
    SlotFrames,
    build_frame,
    frame_permutation,
    gamma_in_adiabatic,
    hellmann_feynman_force,
    slot_coupling,
    slot_frames_cols,
    slot_gamma_diag,
    slot_vectors,
    transition_amplitudes,
)
from .model import (
    AdiabaticFrame,
    BathParams,
    DecayKind,
    DecaySpec,
    PairTrajectory,
    PhasePoint,
    SimConfig,
    SpinChainParams,
)
from .observables import MomentAccumulator, TimeRecord, TimeSeries
from .sampler import initial_subsystem, sample_bath_point, trajectory_stream

__all__ = [
    "CHUNK_SAMPLES",
    "EnsembleSnapshot",
    "EnsembleState",
    "RunSummary",
    "classical_step",
    "momentum_jump",
    "run_ensemble",
    "simulate",
    "sstp_step",
]

# Samples per work chunk.  Fixed (never derived from the worker count) so
# that chunk boundaries, and therefore all floating-point reduction orders
# and stochastic streams, are identical for any number of threads.
CHUNK_SAMPLES = 8192

SPAWN_TOL = 1e-14
HOP_STREAM_TAG = 0x484F50  # distinguishes hop streams from sampling streams

SLOT_PARTNER = (1, 0, 3, 2)
SLOT_ROWS = np.array([[0, 3], [0, 3], [1, 2], [1, 2]])
# unordered-pair rank of an ordered slot pair, used to key shared hop draws
UPAIR = np.array([[min(p, q) * 4 + max(p, q) for q in range(4)] for p in range(4)])


def classical_step(point: PhasePoint, force_pair, bp: BathParams, dt: float, force_fn=None) -> PhasePoint:
    """One velocity-Verlet step on the mean of two adiabatic surfaces.

    ``force_pair`` holds the two surface forces at the current position; the
    closing half-kick re-evaluates the mean force at the new position via
    ``force_fn(R)`` when given (a constant-force leapfrog otherwise).
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    f0 = 0.5 * (np.asarray(force_pair[0], dtype=float) + np.asarray(force_pair[1], dtype=float))
    p_half = point.P + 0.5 * dt * f0
    r_new = point.R + dt * p_half / bp.mass
    f1 = f0 if force_fn is None else np.asarray(force_fn(r_new), dtype=float)
    return PhasePoint(R=r_new, P=p_half + 0.5 * dt * f1)


def momentum_jump(point: PhasePoint, d, delta_e: float, mass: float) -> PhasePoint | None:
    """Shift the momentum along the coupling direction to absorb delta_e.

    Returns the shifted point, or None for a frustrated hop (not enough
    kinetic energy along the coupling direction for an uphill transition).
    The coupling vector must be real up to gauge (true for this model).
    """
    direction = np.real(np.asarray(d))
    norm = np.linalg.norm(direction)
    if norm == 0.0:
        raise ValueError("coupling direction must be nonzero")
    dhat = direction / norm
    pdot = float(point.P @ dhat)
    radicand = pdot * pdot - 2.0 * mass * delta_e
    if radicand < 0.0:
        return None
    shifted = math.copysign(math.sqrt(radicand), pdot)
    return PhasePoint(R=point.R, P=point.P + (shifted - pdot) * dhat)


def _scatter_bins(alpha, alpha_prime, mirrored, local_sample) -> np.ndarray:
    """Flat bin index of each reduction scatter entry: four per member for
    the direct element plus four per mirrored member for the conjugate."""
    rows_a = SLOT_ROWS[alpha]
    rows_b = SLOT_ROWS[alpha_prime]
    base = local_sample * 16
    direct = [base + rows_a[:, p] * 4 + rows_b[:, q] for p in (0, 1) for q in (0, 1)]
    mirror = [(base + rows_b[:, q] * 4 + rows_a[:, p])[mirrored] for p in (0, 1) for q in (0, 1)]
    return np.concatenate(direct + mirror)


def _channel_ids(table) -> list[tuple[int, int, str]]:
    """Static transition-channel order shared by member and mirror."""
    ids = []
    for s in range(4):
        for t in range(4):
            if s != t and table.hop_weight[s, t] != 0.0:
                ids.append((s, t, "d"))
    for s in range(4):
        for t in range(4):
            if s != t and abs(table.tgamma[s, 0, t, 0]) > 0.0:
                ids.append((s, t, "gamma"))
    return ids


def sstp_step(
    member: PairTrajectory,
    frame: AdiabaticFrame,
    sp: SpinChainParams,
    bp: BathParams,
    decay: DecaySpec,
    dt: float,
    mode: str = "adiabatic",
    rng: np.random.Generator | None = None,
) -> tuple[PairTrajectory, AdiabaticFrame]:
    """Advance one member one step on the generic eigensolver route.

    Reference implementation of the engine step: velocity Verlet on the mean
    surface, trapezoidal phase and decay accumulation over the endpoint
    frames, state labels tracked through crossings by frame overlap, and (in
    nonadiabatic mode) one sampled transition with momentum jump.
    """
    alpha, alpha_p = member.alpha, member.alpha_prime
    store: dict = {}

    def mean_force(r_new):
        nxt = build_frame(sp, bp, r_new, previous=frame)
        perm = frame_permutation(frame, nxt)
        store["frame"] = nxt
        store["perm"] = perm
        fa = hellmann_feynman_force(sp, bp, nxt, int(perm[alpha]))
        fb = hellmann_feynman_force(sp, bp, nxt, int(perm[alpha_p]))
        return 0.5 * (fa + fb)

    f_a = hellmann_feynman_force(sp, bp, frame, alpha)
    f_b = hellmann_feynman_force(sp, bp, frame, alpha_p)
    point = classical_step(member.point, (f_a, f_b), bp, dt, mean_force)
    nxt: AdiabaticFrame = store["frame"]
    a1 = int(store["perm"][alpha])
    b1 = int(store["perm"][alpha_p])

    gad0 = gamma_in_adiabatic(decay, frame)
    gad1 = gamma_in_adiabatic(decay, nxt)
    omega0 = frame.energies[alpha] - frame.energies[alpha_p]
    omega1 = nxt.energies[a1] - nxt.energies[b1]
    gamma0 = gad0.diag[alpha] + gad0.diag[alpha_p]
    gamma1 = gad1.diag[a1] + gad1.diag[b1]
    out = PairTrajectory(
        alpha=a1,
        alpha_prime=b1,
        point=point,
        phase=member.phase + 0.5 * dt * (omega0 + omega1),
        decay=member.decay + 0.5 * dt * (gamma0 + gamma1),
        weight=member.weight,
    )
    if mode != "nonadiabatic":
        return out, nxt

    if rng is None:
        raise ValueError("nonadiabatic mode needs a random stream")
    table = transition_amplitudes(bp, nxt, point, gad1)
    entries = []  # (amplitude, side, source, target, kind)
    for s, t, kind in _channel_ids(table):
        if kind == "d":
            amp = dt * table.hop_weight[s, t]
        else:
            amp = dt * table.tgamma[s, 0, t, 0]  # off-diagonal decay element
        if out.alpha == s:
            entries.append((amp, "ket", s, t, kind))
        if out.alpha_prime == s:
            bra = dt * np.conj(table.hop_weight[s, t]) if kind == "d" else dt * np.conj(amp / dt)
            entries.append((bra, "bra", s, t, kind))
    total = sum(abs(a) for a, *_ in entries)
    u = rng.random() * (1.0 + total)
    cum = 0.0
    for amp, side, s, t, kind in entries:
        if u < cum + abs(amp):
            factor = -(1.0 + total) * amp / abs(amp)
            if kind == "d":
                delta_e = nxt.energies[t] - nxt.energies[s]
                jumped = momentum_jump(point, table.d[s, t], delta_e, bp.mass)
                if jumped is None:  # frustrated: fall through as a no-hop
                    break
                out = replace(out, point=jumped)
            if side == "ket":
                out = replace(out, alpha=t, weight=out.weight * factor)
            else:
                out = replace(out, alpha_prime=t, weight=out.weight * factor)
            return out, nxt
        cum += abs(amp)
    return replace(out, weight=out.weight * (1.0 + total)), nxt


@dataclass
class RunSummary:
    """Bookkeeping attached to every run."""

    n_members: int = 0
    n_excluded: int = 0
    excluded_weight: float = 0.0
    n_hops: int = 0
    n_frustrated: int = 0
    wall_time: float = 0.0

    def merge(self, other: "RunSummary") -> None:
        self.n_members += other.n_members
        self.n_excluded += other.n_excluded
        self.excluded_weight += other.excluded_weight
        self.n_hops += other.n_hops
        self.n_frustrated += other.n_frustrated


@dataclass
class EnsembleSnapshot:
    """Raw member state at one output time for a block of samples."""

    t: float
    sample_start: int
    n_samples: int
    sample_index: np.ndarray    # (n,) global sample of each member
    alpha: np.ndarray
    alpha_prime: np.ndarray
    weight: np.ndarray
    phase: np.ndarray
    decay: np.ndarray
    R: np.ndarray
    P: np.ndarray
    frames: SlotFrames
    mirrored: np.ndarray
    mode: str

    reduce_bins: np.ndarray | None = None  # cached scatter layout (engine-owned)

    def _components(self, slots: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fr = self.frames
        c1 = np.choose(slots, [fr.xA, -fr.yA, fr.xB, -fr.yB])
        c2 = np.choose(slots, [fr.yA, fr.xA, fr.yB, fr.xB])
        return c1, c2

    def scatter_bins(self) -> np.ndarray:
        return _scatter_bins(
            self.alpha, self.alpha_prime, self.mirrored, self.sample_index - self.sample_start
        )

    def sample_matrices(self) -> np.ndarray:
        """Per-sample subsystem density matrices, shape (n_samples, 4, 4).

        Every member scatters its weight * exp(-i phase - decay), back-rotated
        with its own current frame, into its sample's matrix; mirrored members
        also deposit the Hermitian-conjugate element of the implicit
        (alpha', alpha) partner.
        """
        factor = self.weight * np.exp(-1j * self.phase - self.decay)
        c1a, c2a = self._components(self.alpha)
        c1b, c2b = self._components(self.alpha_prime)
        m = self.mirrored
        direct = [factor * (ca * cb) for ca in (c1a, c2a) for cb in (c1b, c2b)]
        mirror = [np.conj(v[m]) for v in direct]
        vals = np.concatenate(direct + mirror)
        bins = self.reduce_bins if self.reduce_bins is not None else self.scatter_bins()
        size = self.n_samples * 16
        re = np.bincount(bins, weights=vals.real, minlength=size)
        im = np.bincount(bins, weights=vals.imag, minlength=size)
        return (re + 1j * im).reshape(self.n_samples, 4, 4)

    @property
    def members(self) -> list[PairTrajectory]:
        """Materialize every pair member (mirrors included) for inspection."""
        out = []
        for m in range(len(self.weight)):
            pt = PhasePoint(R=self.R[m], P=self.P[m])
            out.append(
                PairTrajectory(
                    alpha=int(self.alpha[m]),
                    alpha_prime=int(self.alpha_prime[m]),
                    point=pt,
                    phase=float(self.phase[m]),
                    decay=float(self.decay[m]),
                    weight=complex(self.weight[m]),
                )
            )
            if self.mirrored[m]:
                out.append(
                    PairTrajectory(
                        alpha=int(self.alpha_prime[m]),
                        alpha_prime=int(self.alpha[m]),
                        point=pt,
                        phase=-float(self.phase[m]),
                        decay=float(self.decay[m]),
                        weight=complex(np.conj(self.weight[m])),
                    )
                )
        return out


class EnsembleState:
    """Vectorized ensemble over samples [sample_start, sample_start + n).

    In adiabatic mode only ordered pairs with alpha <= alpha' are stored;
    the (alpha', alpha) partner of an off-diagonal pair follows the same
    trajectory with conjugate phase and identical decay, so it is carried
    implicitly (``mirrored``) and restored at reduction time.  Nonadiabatic
    mode stores all ordered pairs explicitly, with mirror partners coupled
    to the same transition draws so that they hop conjugately.
    """

    def __init__(
        self,
        sp: SpinChainParams,
        bp: BathParams,
        decay: DecaySpec,
        config: SimConfig,
        sample_start: int = 0,
        n_samples: int | None = None,
    ):
        if bp.n_osc != 2:
            raise ValueError("the ensemble engine is built for the two-oscillator bath")
        self.sp, self.bp, self.decay, self.config = sp, bp, decay, config
        self.sample_start = sample_start
        self.n_local = config.n_samples if n_samples is None else n_samples
        self.mode = config.mode
        self.t = 0.0
        self._step_index = 0
        self.summary = RunSummary()

        r0 = np.empty((self.n_local, 2))
        p0 = np.empty((self.n_local, 2))
        for i in range(self.n_local):
            pt = sample_bath_point(bp, trajectory_stream(config.seed, sample_start + i))
            r0[i] = pt.R
            p0[i] = pt.P
        frames0 = slot_frames(sp, bp, r0)
        u0 = slot_vectors(frames0)
        rho0 = initial_subsystem(config.initial_state)
        elements0 = np.einsum("nip,ij,njq->npq", u0, rho0, u0)

        canonical = self.mode == "adiabatic"
        pairs = [(p, q) for p in range(4) for q in range(4) if (p <= q if canonical else True)]
        samp, al, ap, wt, mir = [], [], [], [], []
        for p, q in pairs:
            idx = np.nonzero(np.abs(elements0[:, p, q]) > SPAWN_TOL)[0]
            if idx.size == 0:
                continue
            samp.append(idx)
            al.append(np.full(idx.size, p, dtype=np.int64))
            ap.append(np.full(idx.size, q, dtype=np.int64))
            wt.append(elements0[idx, p, q])
            mir.append(np.full(idx.size, canonical and p < q))
        samp = np.concatenate(samp)
        order = np.argsort(samp, kind="stable")
        self.samp_local = samp[order]
        self.alpha = np.concatenate(al)[order]
        self.alpha_prime = np.concatenate(ap)[order]
        self.weight = np.concatenate(wt)[order].astype(complex)
        self.mirrored = np.concatenate(mir)[order]
        n = self.samp_local.size
        self.r1 = np.ascontiguousarray(r0[self.samp_local, 0])
        self.r2 = np.ascontiguousarray(r0[self.samp_local, 1])
        self.p1 = np.ascontiguousarray(p0[self.samp_local, 0])
        self.p2 = np.ascontiguousarray(p0[self.samp_local, 1])
        self.phase = np.zeros(n)
        self.decay_acc = np.zeros(n)
        self._ar = np.arange(n)
        self.summary.n_members = int(n + np.count_nonzero(self.mirrored))

        if self.mode == "nonadiabatic":
            sample_global = self.samp_local + sample_start
            upair = UPAIR[self.alpha, self.alpha_prime]
            self._hop_chunk = sample_global // CHUNK_SAMPLES
            self._hop_offset = (sample_global % CHUNK_SAMPLES) * 16 + upair
            # off-diagonal decay channels exist only if the decay operator has
            # off-diagonal elements in the slot basis somewhere
            self._gamma_channels = decay.kind is DecayKind.CUSTOM or (
                decay.kind is DecayKind.PROJECTOR_EE and sp.jx != sp.jy
            )
        # decay expectations are configuration-independent unless a coupled
        # block mixes states that the operator distinguishes
        g = np.real(decay.matrix)
        varies_a = (sp.jx != sp.jy) and (g[0, 0] != g[3, 3] or g[0, 3] != 0.0)
        varies_b = (sp.jx != -sp.jy) and (g[1, 1] != g[2, 2] or g[1, 2] != 0.0)
        self._gdiag_constant = not (varies_a or varies_b)
        self._slot_indices_dirty = True
        self._refresh_frames()
        self._refresh_pair_caches()

    # -- frame-dependent caches ------------------------------------------

    def _refresh_frames(self) -> None:
        self._frames = slot_frames_cols(self.sp, self.bp, self.r1, self.r2)
        if not self._gdiag_constant:
            self._gdiag = slot_gamma_diag(self.decay, self._frames)
        if self.mode == "nonadiabatic":
            self._couplings = slot_coupling(self.bp, self._frames)

    def _refresh_slot_indices(self) -> None:
        """Flat gather indices into the (4, n) per-slot tables; constant while
        no transitions change the member labels."""
        n = self._ar.size
        self._idx_a = self.alpha * n + self._ar
        self._idx_b = self.alpha_prime * n + self._ar
        if self._gdiag_constant:
            gd = slot_gamma_diag(self.decay, self._frames)[:, :1].ravel()
            self._gamma_const = gd[self.alpha] + gd[self.alpha_prime]
        self._bins_cache = None
        self._slot_indices_dirty = False

    def _refresh_pair_caches(self) -> None:
        if self._slot_indices_dirty:
            self._refresh_slot_indices()
        fr = self._frames
        ia, ib = self._idx_a, self._idx_b
        self._omega = fr.energies.ravel().take(ia) - fr.energies.ravel().take(ib)
        if self._gdiag_constant:
            self._gamma = self._gamma_const
        else:
            self._gamma = self._gdiag.ravel().take(ia) + self._gdiag.ravel().take(ib)
        self._zmean1 = 0.5 * (fr.z1.ravel().take(ia) + fr.z1.ravel().take(ib))
        self._zmean2 = 0.5 * (fr.z2.ravel().take(ia) + fr.z2.ravel().take(ib))

    def _mean_force(self) -> tuple[np.ndarray, np.ndarray]:
        restore = self.bp.mass * self.bp.omega**2
        f1 = self.bp.c * self._zmean1 - restore * self.r1
        f2 = self.bp.c * self._zmean2 - restore * self.r2
        return f1, f2

    def _reduce_bins(self) -> np.ndarray:
        if self._bins_cache is None:
            self._bins_cache = _scatter_bins(
                self.alpha, self.alpha_prime, self.mirrored, self.samp_local
            )
        return self._bins_cache

    # -- time stepping ----------------------------------------------------

    def advance(self, n_steps: int) -> None:
        dt = self.config.dt
        over_mass = dt / self.bp.mass
        half_dt = 0.5 * dt
        for _ in range(n_steps):
            f1, f2 = self._mean_force()
            ph1 = self.p1 + half_dt * f1
            ph2 = self.p2 + half_dt * f2
            self.r1 += over_mass * ph1
            self.r2 += over_mass * ph2
            omega_old = self._omega
            gamma_old = self._gamma
            self._refresh_frames()
            self._refresh_pair_caches()
            g1, g2 = self._mean_force()
            self.p1 = ph1 + half_dt * g1
            self.p2 = ph2 + half_dt * g2
            self.phase += half_dt * (omega_old + self._omega)
            if self._gamma is gamma_old:  # configuration-independent rates
                self.decay_acc += dt * self._gamma
            else:
                self.decay_acc += half_dt * (gamma_old + self._gamma)
            if self.mode == "nonadiabatic":
                self._hop_stage(dt)
            self._step_index += 1
            self.t = self._step_index * dt

    # -- stochastic transitions (nonadiabatic mode) ------------------------

    def _hop_uniforms(self) -> np.ndarray:
        """One shared uniform per (sample, unordered pair) for this step,
        drawn from streams keyed by fixed sample blocks so the values do not
        depend on how samples were chunked across workers."""
        u = np.empty(self.samp_local.size)
        for chunk in np.unique(self._hop_chunk):
            seq = np.random.SeedSequence(
                [self.config.seed, HOP_STREAM_TAG, self._step_index, int(chunk)]
            )
            block = np.random.Generator(np.random.Philox(seq)).random(CHUNK_SAMPLES * 16)
            mask = self._hop_chunk == chunk
            u[mask] = block[self._hop_offset[mask]]
        return u

    def _slot_gamma_matrix(self) -> np.ndarray:
        u = slot_vectors(self._frames)
        return np.einsum("nip,ij,njq->npq", u, self.decay.matrix, u)

    def _hop_stage(self, dt: float) -> None:
        n = self.samp_local.size
        v1 = self.p1 / self.bp.mass
        v2 = self.p2 / self.bp.mass
        entries = []  # (amplitude (n,), side, source, target, kind)
        for (s, t), dvec in sorted(self._couplings.items()):
            amp = dt * (v1 * dvec[:, 0] + v2 * dvec[:, 1])
            entries.append((np.where(self.alpha == s, amp, 0.0), "ket", s, t, "d"))
            entries.append((np.where(self.alpha_prime == s, amp, 0.0), "bra", s, t, "d"))
        if self._gamma_channels:
            gs = self._slot_gamma_matrix()
            for s in range(4):
                for t in range(4):
                    if s == t:
                        continue
                    ket = np.where(self.alpha == s, dt * gs[:, s, t], 0.0)
                    bra = np.where(self.alpha_prime == s, dt * gs[:, t, s], 0.0)
                    if np.any(ket):
                        entries.append((ket, "ket", s, t, "gamma"))
                    if np.any(bra):
                        entries.append((bra, "bra", s, t, "gamma"))
        if not entries:
            return
        total = np.zeros(n)
        for amp, *_ in entries:
            total += np.abs(amp)
        u = self._hop_uniforms() * (1.0 + total)
        decided = np.zeros(n, dtype=bool)
        nohop_factor = np.zeros(n, dtype=bool)  # frustrated members
        cum = np.zeros(n)
        energies = self._frames.energies
        for amp, side, s, t, kind in entries:
            mag = np.abs(amp)
            hit = ~decided & (u >= cum) & (u < cum + mag)
            cum += mag
            if not np.any(hit):
                continue
            decided |= hit
            factor = -(1.0 + total[hit]) * amp[hit] / mag[hit]
            if kind == "d":
                dvec = self._couplings[(s, t)][hit]
                norm = np.sqrt(dvec[:, 0] ** 2 + dvec[:, 1] ** 2)
                d1 = dvec[:, 0] / norm
                d2 = dvec[:, 1] / norm
                pdot = self.p1[hit] * d1 + self.p2[hit] * d2
                delta_e = energies[t][hit] - energies[s][hit]
                radicand = pdot**2 - 2.0 * self.bp.mass * delta_e
                ok = radicand >= 0.0
                self.summary.n_frustrated += int(np.count_nonzero(~ok))
                idx = np.nonzero(hit)[0]
                nohop_factor[idx[~ok]] = True
                accepted = idx[ok]
                shifted = np.copysign(np.sqrt(radicand[ok]), pdot[ok])
                self.p1[accepted] += (shifted - pdot[ok]) * d1[ok]
                self.p2[accepted] += (shifted - pdot[ok]) * d2[ok]
                self.weight[accepted] *= factor[ok]
                if side == "ket":
                    self.alpha[accepted] = t
                else:
                    self.alpha_prime[accepted] = t
                self.summary.n_hops += int(accepted.size)
            else:
                idx = np.nonzero(hit)[0]
                self.weight[idx] *= factor
                if side == "ket":
                    self.alpha[idx] = t
                else:
                    self.alpha_prime[idx] = t
                self.summary.n_hops += int(idx.size)
        survivors = ~decided | nohop_factor
        self.weight[survivors] *= 1.0 + total[survivors]
        if np.any(decided):
            self._slot_indices_dirty = True  # labels may have changed
        self._refresh_pair_caches()

    # -- views -------------------------------------------------------------

    def snapshot(self, copy: bool = True) -> EnsembleSnapshot:
        def arr(a):
            return a.copy() if copy else a

        return EnsembleSnapshot(
            t=self.t,
            sample_start=self.sample_start,
            n_samples=self.n_local,
            sample_index=self.samp_local + self.sample_start,
            alpha=arr(self.alpha),
            alpha_prime=arr(self.alpha_prime),
            weight=arr(self.weight),
            phase=arr(self.phase),
            decay=arr(self.decay_acc),
            R=np.column_stack([self.r1, self.r2]),
            P=np.column_stack([self.p1, self.p2]),
            frames=self._frames,
            mirrored=arr(self.mirrored),
            mode=self.mode,
            reduce_bins=self._reduce_bins(),
        )

    @property
    def members(self) -> list[PairTrajectory]:
        return self.snapshot().members


def run_ensemble(sp: SpinChainParams, bp: BathParams, decay: DecaySpec, config: SimConfig):
    """Run the full ensemble, yielding (t, snapshot) every output stride."""
    engine = EnsembleState(sp, bp, decay, config)
    yield engine.t, engine.snapshot()
    for _ in range(config.n_steps // config.output_stride):
        engine.advance(config.output_stride)
        yield engine.t, engine.snapshot()


def _run_metadata(sp, bp, decay, config) -> dict:
    state = config.initial_state
    return {
        "jx": sp.jx,
        "jy": sp.jy,
        "jz": sp.jz,
        "c": bp.c,
        "mass": bp.mass,
        "omega": bp.omega,
        "beta": bp.beta,
        "gamma_kind": decay.kind.value,
        "gamma": decay.strength if decay.strength is not None else "custom",
        "dt": config.dt,
        "steps": config.n_steps,
        "samples": config.n_samples,
        "seed": config.seed,
        "mode": config.mode,
        "initial_state": state if isinstance(state, str) else "custom",
        "output_stride": config.output_stride,
    }


def _chunk_accumulate(sp, bp, decay, config, bounds) -> tuple[list[MomentAccumulator], RunSummary]:
    start, stop = bounds
    engine = EnsembleState(sp, bp, decay, config, sample_start=start, n_samples=stop - start)
    accs = [MomentAccumulator.from_samples(engine.snapshot(copy=False).sample_matrices())]
    for _ in range(config.n_steps // config.output_stride):
        engine.advance(config.output_stride)
        accs.append(MomentAccumulator.from_samples(engine.snapshot(copy=False).sample_matrices()))
    return accs, engine.summary


def simulate(
    sp: SpinChainParams,
    bp: BathParams,
    decay: DecaySpec,
    config: SimConfig,
    threads: int = 1,
) -> tuple[TimeSeries, RunSummary]:
    """Full pipeline: sample, propagate, reduce to a time series.

    Samples are processed in fixed-size chunks and their statistics combined
    in chunk order, so the output bytes depend only on the configuration and
    seed, never on the worker count.
    """
    started = time.perf_counter()
    bounds = [
        (s, min(s + CHUNK_SAMPLES, config.n_samples))
        for s in range(0, config.n_samples, CHUNK_SAMPLES)
    ]
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda b: _chunk_accumulate(sp, bp, decay, config, b), bounds))
    else:
        results = [_chunk_accumulate(sp, bp, decay, config, b) for b in bounds]

    summary = RunSummary()
    accs = results[0][0]
    summary.merge(results[0][1])
    for chunk_accs, chunk_summary in results[1:]:
        accs = [a.combine(b) for a, b in zip(accs, chunk_accs)]
        summary.merge(chunk_summary)

    stride_t = config.output_stride * config.dt
    rows = [
        TimeRecord(t=k * stride_t, density=acc.density(), trace_stderr=acc.trace_stderr())
        for k, acc in enumerate(accs)
    ]
    summary.wall_time = time.perf_counter() - started
    return TimeSeries(rows=rows, metadata=_run_metadata(sp, bp, decay, config)), summary
