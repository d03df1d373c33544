"""The multi-view recognition network.

Per view: a five-conv/three-pool state branch producing a flattened feature
vector, and a temporal branch (two time-distributed convs, a TD max-pool,
two convolutional GRU layers) producing a temporal feature vector. Per-view
classifiers emit per-head class distributions; gating networks weight the
views; the fused output of each head is the gating-weighted convex
combination of the per-view distributions. A no-gating variant replaces the
per-view classifiers with single classifiers over aggregated features.

The forward graph is batched: each view's input is an array [T, B, H, W, C]
(window of T=5 frames, oldest first). The decision pipeline (`model_forward`)
wraps the graph with the detector-driven status rules, per-expert masking,
and unknown overrides, returning FusedPrediction objects.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import ops
from .config import ModelConfig
from .decision import (
    Detection,
    consolidate_status,
    consolidate_status_majority,
    erase_boxes,
    mask_split,
    select_target_onion,
    unknown_override,
)
from .errors import ConfigurationError, UsageError
from .rng import Rng
from .tensor import DTYPES, Parameter, Tape, Tensor

STATE_FILTERS = 32
STATE_KERNEL = (3, 9)
ACTION_FILTERS = 32


def _chain(h, w, steps):
    for sh, sw in steps:
        h = -(-h // sh)
        w = -(-w // sw)
    return h, w


def state_stack_extents(height, width):
    """(H, W) after each stage of the state branch, conv1 .. final pool."""
    out = []
    h, w = height, width
    for sh, sw in [(3, 3), (3, 3), (3, 3), (3, 3), (3, 3), (3, 3), (2, 2), (2, 2)]:
        h, w = _chain(h, w, [(sh, sw)])
        out.append((h, w))
    return out


def action_stack_extents(height, width):
    """(H, W) after TD-conv1, TD-conv2, TD-pool, GRU1, GRU2."""
    out = []
    h, w = height, width
    for sh, sw in [(2, 2), (2, 2), (3, 3), (2, 2), (2, 2)]:
        h, w = _chain(h, w, [(sh, sw)])
        out.append((h, w))
    return out


@dataclass
class FusedPrediction:
    """Joint per-expert output of one forward pass."""

    state: dict  # head -> fused label index
    action: int
    state_dists: dict  # head -> fused distribution
    action_dist: np.ndarray
    per_view_state: dict  # head -> [V, k]
    per_view_action: np.ndarray  # [V, k]
    gating_state: np.ndarray  # [V]
    gating_action: np.ndarray  # [V]
    status: str | None = None
    expert_id: int | None = None
    unknown: bool = False
    _unknown_indices: dict = field(default_factory=dict, repr=False)

    def with_unknown_labels(self) -> "FusedPrediction":
        if not self._unknown_indices:
            raise ConfigurationError("prediction has no unknown class to assign")
        state = {h: self._unknown_indices[h] for h in self.state}
        return FusedPrediction(
            state=state,
            action=self._unknown_indices["action"],
            state_dists=self.state_dists,
            action_dist=self.action_dist,
            per_view_state=self.per_view_state,
            per_view_action=self.per_view_action,
            gating_state=self.gating_state,
            gating_action=self.gating_action,
            status=self.status,
            expert_id=self.expert_id,
            unknown=True,
            _unknown_indices=self._unknown_indices,
        )


@dataclass
class FrameBundle:
    """Synchronized per-view frame windows plus detector output.

    views[v] is [T, H, W, C] (oldest first); detections[v][tau] lists the
    detector hits for that view at window step tau.
    """

    views: list
    detections: list
    labels: dict | None = None

    def __post_init__(self):
        T = self.views[0].shape[0]
        if any(v.shape[0] != T for v in self.views):
            raise UsageError("views disagree on window length")
        if len(self.detections) != len(self.views):
            raise UsageError("detections must cover every view")


@dataclass
class DecisionContext:
    """Per-source-view calibration the decision module needs."""

    conveyor_end_x: dict | None = None  # sorting: view id -> pixel x
    map_origin: dict | None = None  # patrolling: view id -> (x0, y0)
    cell_px: dict | None = None  # patrolling: view id -> pixels per cell


class MultiViewNet:
    """Parameters plus the batched forward graph for one configuration."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        self.seed = seed
        self.np_dtype = DTYPES[config.dtype]
        self.params: dict[str, Parameter] = {}
        self.bn_states: dict[str, ops.BatchNormState] = {}
        self._rng = Rng(seed, "init")

        sh, sw = state_stack_extents(config.height, config.width)[-1]
        self.f_len = sh * sw * STATE_FILTERS
        ah, aw = action_stack_extents(config.height, config.width)[-1]
        self.temp_len = ah * aw * ACTION_FILTERS
        self._build()

    # -- construction ------------------------------------------------------

    def _uniform(self, name, shape, fan_in):
        bound = math.sqrt(6.0 / fan_in)
        vals = self._rng.child(name).uniform(int(np.prod(shape)), -bound, bound)
        return Parameter(vals.reshape(shape).astype(self.np_dtype), name)

    def _zeros(self, name, shape):
        return Parameter(np.zeros(shape, dtype=self.np_dtype), name)

    def _ones(self, name, shape):
        return Parameter(np.ones(shape, dtype=self.np_dtype), name)

    def _add_conv(self, name, kh, kw, cin, cout):
        self.params[f"{name}/kernel"] = self._uniform(f"{name}/kernel", (kh, kw, cin, cout), kh * kw * cin)
        self.params[f"{name}/bias"] = self._zeros(f"{name}/bias", (cout,))

    def _add_dense(self, name, n, m):
        self.params[f"{name}/weight"] = self._uniform(f"{name}/weight", (n, m), n)
        self.params[f"{name}/bias"] = self._zeros(f"{name}/bias", (m,))

    def _add_bn(self, name, channels):
        self.params[f"{name}/gamma"] = self._ones(f"{name}/gamma", (channels,))
        self.params[f"{name}/beta"] = self._zeros(f"{name}/beta", (channels,))
        self.bn_states[name] = ops.BatchNormState(channels, self.np_dtype)

    def _add_gru(self, name, cin, ch):
        for gate in ("z", "r", "c"):
            self.params[f"{name}/wx{gate}"] = self._uniform(f"{name}/wx{gate}", (3, 3, cin, ch), 9 * cin)
            self.params[f"{name}/wh{gate}"] = self._uniform(f"{name}/wh{gate}", (3, 3, ch, ch), 9 * ch)
            self.params[f"{name}/b{gate}"] = self._zeros(f"{name}/b{gate}", (ch,))

    def _add_classifier(self, name, in_len, head_widths):
        h1, h2 = self.config.hidden
        self._add_dense(f"{name}/fc1", in_len, h1)
        self._add_dense(f"{name}/fc2", h1, h2)
        for head, k in head_widths:
            self._add_dense(f"{name}/head_{head}", h2, k)

    def _build(self):
        cfg = self.config
        kh, kw = STATE_KERNEL
        cls_heads = list(cfg.state_heads)
        self.action_cls_in = self.temp_len + (self.f_len if cfg.state_action_connection else 0)
        self.action_gating_in = cfg.num_views * self.temp_len + (
            cfg.num_views * self.f_len if cfg.state_action_connection else 0
        )
        for v in range(cfg.num_views):
            s = f"view{v}/state"
            self._add_conv(f"{s}/conv1", kh, kw, cfg.channels, STATE_FILTERS)
            for i in (2, 3, 4, 5):
                self._add_conv(f"{s}/conv{i}", kh, kw, STATE_FILTERS, STATE_FILTERS)
            self._add_bn(f"{s}/bn", STATE_FILTERS)
            a = f"view{v}/action"
            self._add_conv(f"{a}/td1", 3, 3, cfg.channels, ACTION_FILTERS)
            self._add_conv(f"{a}/td2", 3, 3, ACTION_FILTERS, ACTION_FILTERS)
            self._add_gru(f"{a}/gru1", ACTION_FILTERS, ACTION_FILTERS)
            self._add_gru(f"{a}/gru2", ACTION_FILTERS, ACTION_FILTERS)
            self._add_bn(f"{a}/bn", ACTION_FILTERS)
            if cfg.use_gating:
                self._add_classifier(f"view{v}/state_cls", self.f_len, cls_heads)
                self._add_classifier(
                    f"view{v}/action_cls", self.action_cls_in, [("action", cfg.action_classes)]
                )
        if cfg.use_gating:
            self._add_classifier("gating/state", cfg.num_views * self.f_len, [("out", cfg.num_views)])
            self._add_classifier("gating/action", self.action_gating_in, [("out", cfg.num_views)])
        else:
            self._add_classifier("agg/state_cls", cfg.num_views * self.f_len, cls_heads)
            agg_in = cfg.num_views * self.temp_len + (
                cfg.num_views * self.f_len if cfg.state_action_connection else 0
            )
            self._add_classifier("agg/action_cls", agg_in, [("action", cfg.action_classes)])

    # -- parameter access ---------------------------------------------------

    def parameters(self):
        return list(self.params.values())

    def _p(self, name) -> Tensor:
        return ops.leaf(self.params[name])

    def _gru_cell(self, name) -> dict:
        return {
            "wxz": self._p(f"{name}/wxz"), "whz": self._p(f"{name}/whz"), "bz": self._p(f"{name}/bz"),
            "wxr": self._p(f"{name}/wxr"), "whr": self._p(f"{name}/whr"), "br": self._p(f"{name}/br"),
            "wxc": self._p(f"{name}/wxc"), "whc": self._p(f"{name}/whc"), "bc": self._p(f"{name}/bc"),
        }

    # -- branches ------------------------------------------------------------

    def state_branch(self, v: int, frames: Tensor, train: bool) -> Tensor:
        """Conv stack for one view's current frames [B,H,W,C] -> [B, f_len]."""
        cfg = self.config
        if frames.data.shape[-1] != cfg.channels:
            raise ConfigurationError(
                f"state branch expects {cfg.channels} channels, got {frames.data.shape[-1]}"
            )
        s = f"view{v}/state"
        x = ops.conv2d(frames, self._p(f"{s}/conv1/kernel"), self._p(f"{s}/conv1/bias"),
                       (3, 3), input_grad=False, work=f"{s}/conv1", fuse_relu=True)
        x = ops.maxpool2d(x, (4, 4), (3, 3))
        x = ops.conv2d(x, self._p(f"{s}/conv2/kernel"), self._p(f"{s}/conv2/bias"), (3, 3),
                       work=f"{s}/conv2", fuse_relu=True)
        x = ops.conv2d(x, self._p(f"{s}/conv3/kernel"), self._p(f"{s}/conv3/bias"), (3, 3),
                       work=f"{s}/conv3", fuse_relu=True)
        x = ops.maxpool2d(x, (2, 2), (3, 3))
        x = ops.conv2d(x, self._p(f"{s}/conv4/kernel"), self._p(f"{s}/conv4/bias"), (3, 3),
                       work=f"{s}/conv4", fuse_relu=True)
        x = ops.conv2d(x, self._p(f"{s}/conv5/kernel"), self._p(f"{s}/conv5/bias"), (2, 2),
                       work=f"{s}/conv5", fuse_relu=True)
        x = ops.maxpool2d(x, (2, 2), (2, 2))
        x = ops.batchnorm(x, self._p(f"{s}/bn/gamma"), self._p(f"{s}/bn/beta"),
                          self.bn_states[f"{s}/bn"], train)
        return ops.reshape(x, (x.data.shape[0], self.f_len))

    def _gru_layer(self, name: str, folded: Tensor, T: int, B: int):
        """Unrolled conv-GRU over T steps; folded is [T*B, h, w, c].

        The input-to-hidden projections of all steps are computed in one
        strided convolution per gate, then sliced per step; this is the same
        arithmetic as ops.conv_gru_step with h_0 = 0.
        """
        # The three projections share one patch buffer (identical input and
        # geometry) but need distinct input-gradient buffers.
        xz = ops.conv2d(folded, self._p(f"{name}/wxz"), self._p(f"{name}/bz"), (2, 2),
                        work=f"{name}/wx", dx_work=f"{name}/wxz")
        xr = ops.conv2d(folded, self._p(f"{name}/wxr"), self._p(f"{name}/br"), (2, 2),
                        work=f"{name}/wx", dx_work=f"{name}/wxr")
        xc = ops.conv2d(folded, self._p(f"{name}/wxc"), self._p(f"{name}/bc"), (2, 2),
                        work=f"{name}/wx", dx_work=f"{name}/wxc")
        whz, whr, whc = self._p(f"{name}/whz"), self._p(f"{name}/whr"), self._p(f"{name}/whc")
        h = None
        hs = []
        for t in range(T):
            xz_t = ops.narrow(xz, 0, t * B, B)
            xc_t = ops.narrow(xc, 0, t * B, B)
            if h is None:
                z = ops.sigmoid(xz_t)
                c = ops.tanh(xc_t)
                h = ops.mul(z, c)
            else:
                xr_t = ops.narrow(xr, 0, t * B, B)
                z = ops.sigmoid(ops.add(xz_t, ops.conv2d(h, whz, None, (1, 1))))
                r = ops.sigmoid(ops.add(xr_t, ops.conv2d(h, whr, None, (1, 1))))
                c = ops.tanh(ops.add(xc_t, ops.conv2d(ops.mul(r, h), whc, None, (1, 1))))
                h = ops.add(ops.mul(ops.one_minus(z), h), ops.mul(z, c))
            hs.append(h)
        return hs

    def action_branch(self, v: int, window: np.ndarray, train: bool) -> Tensor:
        """Temporal branch for one view's window [T,B,H,W,C] -> [B, temp_len]."""
        cfg = self.config
        T = window.shape[0]
        if T != cfg.window:
            raise UsageError(f"expected a {cfg.window}-frame window, got {T}")
        frames = window if cfg.action_window == "inclusive" else window[: T - 1]
        Tc, B = frames.shape[0], frames.shape[1]
        a = f"view{v}/action"
        folded = Tensor.__new__(Tensor)
        folded.data = frames.reshape(Tc * B, *frames.shape[2:])
        folded.grad = None
        x = ops.conv2d(folded, self._p(f"{a}/td1/kernel"), self._p(f"{a}/td1/bias"),
                       (2, 2), input_grad=False, work=f"{a}/td1", fuse_relu=True)
        x = ops.conv2d(x, self._p(f"{a}/td2/kernel"), self._p(f"{a}/td2/bias"), (2, 2),
                       work=f"{a}/td2", fuse_relu=True)
        x = ops.maxpool2d(x, (4, 4), (3, 3))
        h1 = self._gru_layer(f"{a}/gru1", x, Tc, B)
        seq = ops.concat(h1, axis=0)
        h2 = self._gru_layer(f"{a}/gru2", seq, Tc, B)
        x = ops.batchnorm(h2[-1], self._p(f"{a}/bn/gamma"), self._p(f"{a}/bn/beta"),
                          self.bn_states[f"{a}/bn"], train)
        return ops.reshape(x, (B, self.temp_len))

    def _classifier_trunk(self, name: str, x: Tensor) -> Tensor:
        x = ops.relu(ops.dense(x, self._p(f"{name}/fc1/weight"), self._p(f"{name}/fc1/bias")))
        return ops.relu(ops.dense(x, self._p(f"{name}/fc2/weight"), self._p(f"{name}/fc2/bias")))

    def _head(self, name: str, trunk: Tensor) -> Tensor:
        return ops.softmax(ops.dense(trunk, self._p(f"{name}/weight"), self._p(f"{name}/bias")))

    def state_classifier(self, v: int, f_n: Tensor) -> dict:
        trunk = self._classifier_trunk(f"view{v}/state_cls", f_n)
        return {
            head: self._head(f"view{v}/state_cls/head_{head}", trunk)
            for head, _ in self.config.state_heads
        }

    def state_gating(self, f: Tensor) -> Tensor:
        trunk = self._classifier_trunk("gating/state", f)
        return self._head("gating/state/head_out", trunk)

    def action_classifier(self, v: int, temporal: Tensor, f_n: Tensor | None) -> Tensor:
        if self.config.state_action_connection:
            if f_n is None:
                raise ConfigurationError("state-action connection enabled but f_n missing")
            temporal = ops.concat([temporal, f_n], axis=1)
        trunk = self._classifier_trunk(f"view{v}/action_cls", temporal)
        return self._head("view{v}/action_cls/head_action".format(v=v), trunk)

    def action_gating(self, temporals: list, f: Tensor | None) -> Tensor:
        parts = list(temporals)
        if self.config.state_action_connection:
            if f is None:
                raise ConfigurationError("state-action connection enabled but f missing")
            parts.append(f)
        x = ops.concat(parts, axis=1) if len(parts) > 1 else parts[0]
        trunk = self._classifier_trunk("gating/action", x)
        return self._head("gating/action/head_out", trunk)

    # -- full graph ----------------------------------------------------------

    def forward_batch(self, windows: list, train: bool) -> dict:
        """Batched joint forward pass.

        windows: per active view an array [T, B, H, W, C], oldest frame
        first. Returns fused per-head distribution tensors plus per-view and
        gating tensors (None where the variant has no gating).
        """
        cfg = self.config
        V = cfg.num_views
        if len(windows) != V:
            raise UsageError(f"expected {V} views, got {len(windows)}")
        B = windows[0].shape[1]
        f_ns = [self.state_branch(v, Tensor(windows[v][-1]), train) for v in range(V)]
        f = ops.concat(f_ns, axis=1) if V > 1 else f_ns[0]
        temps = [self.action_branch(v, windows[v], train) for v in range(V)]

        out = {"f_ns": f_ns, "temporals": temps}
        if cfg.use_gating:
            g_state = self.state_gating(f)
            g_action = self.action_gating(temps, f if cfg.state_action_connection else None)
            gs = [ops.reshape(ops.narrow(g_state, 1, v, 1), (B,)) for v in range(V)]
            ga = [ops.reshape(ops.narrow(g_action, 1, v, 1), (B,)) for v in range(V)]
            per_view_heads = [self.state_classifier(v, f_ns[v]) for v in range(V)]
            per_view_action = [
                self.action_classifier(v, temps[v], f_ns[v] if cfg.state_action_connection else None)
                for v in range(V)
            ]
            fused_state = {}
            for head, _ in cfg.state_heads:
                acc = None
                for v in range(V):
                    term = ops.scale_rows(per_view_heads[v][head], gs[v])
                    acc = term if acc is None else ops.add(acc, term)
                fused_state[head] = acc
            acc = None
            for v in range(V):
                term = ops.scale_rows(per_view_action[v], ga[v])
                acc = term if acc is None else ops.add(acc, term)
            out.update(
                state=fused_state,
                action=acc,
                gating_state=g_state,
                gating_action=g_action,
                per_view_state=per_view_heads,
                per_view_action=per_view_action,
            )
        else:
            trunk = self._classifier_trunk("agg/state_cls", f)
            fused_state = {
                head: self._head(f"agg/state_cls/head_{head}", trunk)
                for head, _ in cfg.state_heads
            }
            tcat = ops.concat(temps, axis=1) if V > 1 else temps[0]
            action = self.action_classifier_agg(tcat, f if cfg.state_action_connection else None)
            out.update(
                state=fused_state,
                action=action,
                gating_state=None,
                gating_action=None,
                per_view_state=None,
                per_view_action=None,
            )
        return out

    def action_classifier_agg(self, tcat: Tensor, f: Tensor | None) -> Tensor:
        if self.config.state_action_connection:
            if f is None:
                raise ConfigurationError("state-action connection enabled but f missing")
            tcat = ops.concat([tcat, f], axis=1)
        trunk = self._classifier_trunk("agg/action_cls", tcat)
        return self._head("agg/action_cls/head_action", trunk)


def joint_loss(outputs: dict, labels: dict) -> Tensor:
    """Sum of NLL over every fused state head plus the fused action.

    Gating is trained end-to-end through the fusion; there is no separate
    gating target. `labels` maps head name (and "action") to an int or an
    int array matching the batch.
    """
    total = None
    for head in list(outputs["state"].keys()) + ["action"]:
        if head not in labels:
            raise ConfigurationError(f"missing label for enabled head {head!r}")
        dist = outputs["action"] if head == "action" else outputs["state"][head]
        term = ops.nll_loss(dist, labels[head])
        total = term if total is None else ops.add(total, term)
    return total


# ---------------------------------------------------------------------------
# inference pipeline


def _uniform_gating(V: int) -> np.ndarray:
    return np.full(V, 1.0 / V)


def _extract_prediction(net: MultiViewNet, outputs: dict, row: int) -> FusedPrediction:
    cfg = net.config
    V = cfg.num_views
    state, dists, pv_state = {}, {}, {}
    for head, _ in cfg.state_heads:
        d = outputs["state"][head].data[row]
        state[head] = int(np.argmax(d))
        dists[head] = d.copy()
        if outputs["per_view_state"] is not None:
            pv_state[head] = np.stack(
                [outputs["per_view_state"][v][head].data[row] for v in range(V)]
            )
        else:
            pv_state[head] = np.tile(d, (V, 1))
    ad = outputs["action"].data[row]
    pv_action = (
        np.stack([outputs["per_view_action"][v].data[row] for v in range(V)])
        if outputs["per_view_action"] is not None
        else np.tile(ad, (V, 1))
    )
    gs = outputs["gating_state"].data[row] if outputs["gating_state"] is not None else _uniform_gating(V)
    ga = outputs["gating_action"].data[row] if outputs["gating_action"] is not None else _uniform_gating(V)
    unknown_indices = {}
    if cfg.has_unknown:
        unknown_indices = {h: k - 1 for h, k in cfg.state_heads}
        unknown_indices["action"] = cfg.action_classes - 1
    return FusedPrediction(
        state=state,
        action=int(np.argmax(ad)),
        state_dists=dists,
        action_dist=ad.copy(),
        per_view_state=pv_state,
        per_view_action=pv_action,
        gating_state=np.asarray(gs, dtype=np.float64).copy(),
        gating_action=np.asarray(ga, dtype=np.float64).copy(),
        _unknown_indices=unknown_indices,
    )


def sorting_status(bundle: FrameBundle, cfg: ModelConfig, ctx: DecisionContext,
                   majority: bool = False) -> str:
    """Detector path: per-view target selection then cross-view consolidation."""
    statuses = []
    for v in range(cfg.num_views):
        src = cfg.view_ids[v]
        dets = bundle.detections[v][-1]
        onions = [d for d in dets if d.label in ("blemished", "unblemished")]
        effs = [d for d in dets if d.label == "effector"]
        eff_px = max(effs, key=lambda d: d.confidence).center if effs else None
        end_x = (ctx.conveyor_end_x or {}).get(src, cfg.width)
        statuses.append(select_target_onion(onions, eff_px, end_x))
    if majority:
        return consolidate_status_majority(statuses)
    return consolidate_status(statuses)


def _project(det: Detection, src: int, ctx: DecisionContext):
    ox, oy = ctx.map_origin[src]
    c = ctx.cell_px[src]
    cx, cy = det.center
    return ((cx - ox) / c, (cy - oy) / c)


def _patrol_slots(bundle: FrameBundle, cfg: ModelConfig, ctx: DecisionContext):
    """Cluster the current frame's detections across views into expert slots
    using the per-view map calibration."""
    slots = []  # each: {"pos": (mx,my), "dets": {view_slot: Detection}}
    for v in range(cfg.num_views):
        src = cfg.view_ids[v]
        for det in bundle.detections[v][-1]:
            pos = _project(det, src, ctx)
            best = None
            for slot in slots:
                if v in slot["dets"]:
                    continue
                d = math.dist(pos, slot["pos"])
                if d < 1.5 and (best is None or d < best[0]):
                    best = (d, slot)
            if best is None:
                slots.append({"pos": pos, "dets": {v: det}})
            else:
                slot = best[1]
                slot["dets"][v] = det
                pts = [_project(dd, cfg.view_ids[vv], ctx) for vv, dd in slot["dets"].items()]
                slot["pos"] = (
                    sum(p[0] for p in pts) / len(pts),
                    sum(p[1] for p in pts) / len(pts),
                )
    return slots


def _masked_window_for_slot(bundle: FrameBundle, cfg: ModelConfig, slot, v: int):
    """Window for one view with every non-slot expert erased, tracking the
    slot's detection backwards by nearest bbox center."""
    T = bundle.views[v].shape[0]
    frames = []
    ref = slot["dets"].get(v)
    pos = ref.center if ref is not None else None
    for tau in range(T - 1, -1, -1):
        dets = list(bundle.detections[v][tau])
        keep = None
        if pos is not None and dets:
            cand = min(dets, key=lambda d: math.dist(d.center, pos))
            if math.dist(cand.center, pos) < 2.5 * max(cand.bbox[2] - cand.bbox[0], 8):
                keep = cand
                pos = cand.center
        erase = [d.bbox for d in dets if d is not keep]
        frames.append(erase_boxes(bundle.views[v][tau], erase))
    frames.reverse()
    return np.stack(frames)


def model_forward(net: MultiViewNet, bundle: FrameBundle,
                  ctx: DecisionContext | None = None) -> list:
    """Full inference for one synchronized bundle.

    Sorting: one prediction carrying the consolidated detector status.
    Patrolling: one prediction per detected expert (mask-split paths), or a
    single all-unknown prediction when nothing was detected.
    """
    cfg = net.config
    ctx = ctx or DecisionContext()
    if len(bundle.views) != cfg.num_views:
        raise UsageError(f"bundle has {len(bundle.views)} views, config wants {cfg.num_views}")
    if bundle.views[0].shape[0] != cfg.window:
        raise UsageError(f"bundle window must be {cfg.window} frames")

    if cfg.domain == "sorting":
        windows = [v[:, None] for v in bundle.views]  # [T,1,H,W,C]
        outputs = net.forward_batch(windows, train=False)
        pred = _extract_prediction(net, outputs, 0)
        pred.status = sorting_status(bundle, cfg, ctx, majority=not cfg.use_gating)
        return [pred]

    # patrolling
    slots = _patrol_slots(bundle, cfg, ctx)
    if not slots:
        windows = [v[:, None] for v in bundle.views]
        outputs = net.forward_batch(windows, train=False)
        pred = _extract_prediction(net, outputs, 0)
        return [unknown_override(pred, [])]
    windows = []
    for v in range(cfg.num_views):
        per_slot = [_masked_window_for_slot(bundle, cfg, slot, v) for slot in slots]
        windows.append(np.stack(per_slot, axis=1))  # [T, S, H, W, C]
    outputs = net.forward_batch(windows, train=False)
    preds = []
    for i, slot in enumerate(slots):
        pred = _extract_prediction(net, outputs, i)
        pred.expert_id = i
        preds.append(unknown_override(pred, slot["dets"].values()))
    return preds
