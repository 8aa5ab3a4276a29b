"""Differentiable planar articulated rigid-body simulation.

The character is a kinematic tree of rods in the sagittal plane: link 0 is the
torso whose frame origin is the root (pelvis) position, every other link hangs
from a revolute joint.  Generalized coordinates are
``[p_x, p_y, theta, q_1..q_J]`` and the flat simulation state is

    [p_x, p_y, theta, q..., pdot_x, pdot_y, thetadot, qdot...]      (D = 6+2J)

Dynamics are assembled per step by projected Newton-Euler: the mass matrix is
``sum_k m_k J_k^T J_k + sum_k I_k w_k w_k^T`` over link CoM Jacobians, the
velocity-product bias comes from the centripetal acceleration of each rotating
lever arm, and ground contact is a penalty spring-damper with tanh-smoothed
Coulomb friction.  Integration is semi-implicit Euler.  Every quantity is
computed through :mod:`textmotion.autodiff` ops, so the same code path yields
plain numpy results for constant inputs and recorded, differentiable results
for tape tensors.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad


class SimulationError(RuntimeError):
    """Instability or a degenerate model detected during stepping."""


@dataclass(frozen=True)
class Link:
    length: float
    mass: float
    inertia: float
    com_offset: tuple = None  # in the link frame; default mid-rod hanging down
    tip_offset: tuple = None  # distal endpoint, for contact/rendering
    name: str = ""

    def __post_init__(self):
        if self.length <= 0 or self.mass <= 0 or self.inertia <= 0:
            raise ValueError("link length, mass and inertia must be positive")
        if self.com_offset is None:
            object.__setattr__(self, "com_offset", (0.0, -self.length / 2))
        if self.tip_offset is None:
            object.__setattr__(self, "tip_offset", (0.0, -self.length))


@dataclass(frozen=True)
class Joint:
    parent: int               # parent link index; child link index is joint index + 1
    offset: tuple             # attachment point in the parent frame
    limits: tuple = (-2.5, 2.5)


@dataclass
class CharacterModel:
    links: list
    joints: list
    k_p: np.ndarray
    k_d: np.ndarray
    torque_limit: float = 150.0
    contact_points: list = field(default_factory=list)  # (link index, local offset)
    contact_stiffness: float = 3.0e4
    contact_damping: float = 3.0e2
    friction: float = 0.8
    friction_smoothing: float = 0.05  # m/s scale of the tanh friction regularizer
    gravity: float = 9.81
    fixed_root: bool = False  # lock the torso frame (test rigs such as pendulums)

    def __post_init__(self):
        self.k_p = np.asarray(self.k_p, dtype=np.float64)
        self.k_d = np.asarray(self.k_d, dtype=np.float64)
        if len(self.links) != len(self.joints) + 1:
            raise ValueError("expected one link per joint plus the torso")
        if np.any(self.k_p < 0) or np.any(self.k_d < 0):
            raise ValueError("PD gains must be non-negative")
        for j, joint in enumerate(self.joints):
            if not (0 <= joint.parent <= j):
                raise ValueError(f"joint {j} parent {joint.parent} breaks the tree ordering")

    @property
    def actuated(self):
        return len(self.joints)

    @property
    def state_dim(self):
        return 6 + 2 * self.actuated

    @property
    def total_mass(self):
        return float(sum(l.mass for l in self.links))


# ---------------------------------------------------------------------------
# state vector layout helpers

def joint_slice(model):
    return slice(3, 3 + model.actuated)


def split_state(state, model):
    """(position coords, velocity coords) views of a flat state array."""
    n = 3 + model.actuated
    return state[..., :n], state[..., n:]


# ---------------------------------------------------------------------------
# model serialization

def character_to_dict(model):
    return {
        "links": [
            {
                "length": l.length,
                "mass": l.mass,
                "inertia": l.inertia,
                "com_offset": list(l.com_offset),
                "tip_offset": list(l.tip_offset),
                "name": l.name,
            }
            for l in model.links
        ],
        "joints": [
            {"parent": j.parent, "offset": list(j.offset), "limits": list(j.limits)}
            for j in model.joints
        ],
        "k_p": model.k_p.tolist(),
        "k_d": model.k_d.tolist(),
        "torque_limit": model.torque_limit,
        "contact_points": [
            {"link": link, "offset": list(off)} for link, off in model.contact_points
        ],
        "contact_stiffness": model.contact_stiffness,
        "contact_damping": model.contact_damping,
        "friction": model.friction,
        "friction_smoothing": model.friction_smoothing,
        "gravity": model.gravity,
        "fixed_root": model.fixed_root,
    }


def character_from_dict(doc):
    links = [
        Link(
            length=l["length"],
            mass=l["mass"],
            inertia=l["inertia"],
            com_offset=tuple(l["com_offset"]) if "com_offset" in l else None,
            tip_offset=tuple(l["tip_offset"]) if "tip_offset" in l else None,
            name=l.get("name", ""),
        )
        for l in doc["links"]
    ]
    joints = [
        Joint(parent=j["parent"], offset=tuple(j["offset"]), limits=tuple(j.get("limits", (-2.5, 2.5))))
        for j in doc["joints"]
    ]
    return CharacterModel(
        links=links,
        joints=joints,
        k_p=doc["k_p"],
        k_d=doc["k_d"],
        torque_limit=doc.get("torque_limit", 150.0),
        contact_points=[(c["link"], tuple(c["offset"])) for c in doc.get("contact_points", [])],
        contact_stiffness=doc.get("contact_stiffness", 3.0e4),
        contact_damping=doc.get("contact_damping", 3.0e2),
        friction=doc.get("friction", 0.8),
        friction_smoothing=doc.get("friction_smoothing", 0.05),
        gravity=doc.get("gravity", 9.81),
        fixed_root=doc.get("fixed_root", False),
    )


def load_character(path):
    with open(path, encoding="utf-8") as fh:
        return character_from_dict(json.load(fh))


def save_character(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(character_to_dict(model), fh, indent=2)


# ---------------------------------------------------------------------------
# the default biped: torso, two 2-segment legs, two single-segment arms

HIP_SPLIT = 0.0  # rad, fore/aft split of the canonical stance


def default_character():
    torso = Link(0.62, 26.0, 26.0 * 0.62**2 / 12, com_offset=(0.0, 0.31),
                 tip_offset=(0.0, 0.62), name="torso")
    thigh = lambda side: Link(0.42, 5.0, 5.0 * 0.42**2 / 12, name=f"thigh_{side}")
    shin = lambda side: Link(0.42, 3.0, 3.0 * 0.42**2 / 12, name=f"shin_{side}")
    arm = lambda side: Link(0.55, 1.5, 1.5 * 0.55**2 / 12, name=f"arm_{side}")
    links = [torso, thigh("l"), thigh("r"), shin("l"), shin("r"), arm("l"), arm("r")]
    joints = [
        Joint(parent=0, offset=(0.0, 0.0)),      # hip_l   -> link 1
        Joint(parent=0, offset=(0.0, 0.0)),      # hip_r   -> link 2
        Joint(parent=1, offset=(0.0, -0.42)),    # knee_l  -> link 3
        Joint(parent=2, offset=(0.0, -0.42)),    # knee_r  -> link 4
        Joint(parent=0, offset=(0.0, 0.58)),     # shoulder_l -> link 5
        Joint(parent=0, offset=(0.0, 0.58)),     # shoulder_r -> link 6
    ]
    k_p = [300.0, 300.0, 200.0, 200.0, 300.0, 300.0]
    k_d = [30.0, 30.0, 20.0, 20.0, 30.0, 30.0]
    contact_points = [
        (3, (-0.08, -0.42)), (3, (0.08, -0.42)),  # left heel, left toe
        (4, (-0.08, -0.42)), (4, (0.08, -0.42)),  # right heel, right toe
        (1, (0.0, -0.42)), (2, (0.0, -0.42)),     # knees
        (5, (0.0, -0.55)), (6, (0.0, -0.55)),     # hands
        (0, (0.0, 0.0)), (0, (0.0, 0.62)),        # pelvis, head
    ]
    return CharacterModel(links=links, joints=joints, k_p=k_p, k_d=k_d,
                          contact_points=contact_points)


def standing_joints(model):
    """Canonical stance joint angles for the default 6-joint biped."""
    q = np.zeros(model.actuated)
    if model.actuated == 6:
        q[0] = HIP_SPLIT
        q[1] = -HIP_SPLIT
    return q


def standing_state(model):
    """Settled standing state: feet loaded so contact balances gravity."""
    q = standing_joints(model)
    leg = 0.0
    if model.actuated >= 4:
        leg = model.links[1].length * np.cos(q[0]) + model.links[3].length * np.cos(q[0] + q[2])
    settle = model.total_mass * model.gravity / (model.contact_stiffness * 4.0) if model.contact_points else 0.0
    state = np.zeros(model.state_dim)
    state[1] = leg - settle
    state[2] = 0.0
    state[3:3 + model.actuated] = q
    return state


# ---------------------------------------------------------------------------
# engine

class Engine:
    """Precompiled kinematic index tables plus the differentiable step."""

    def __init__(self, model: CharacterModel):
        self.model = model
        J = model.actuated
        K = J + 1
        A = 1 + J                      # rotation axes: root angle, then joints
        self.n = 3 + J
        self.K, self.A, self.J = K, A, J

        parent_link = np.array([j.parent for j in model.joints], dtype=np.intp)
        # chain[k, j] = 1 if joint j lies on the root -> link k path; parents
        # precede children in the joint ordering, so one pass suffices
        chain = np.zeros((K, J))
        for j in range(J):
            chain[j + 1] = chain[model.joints[j].parent]
            chain[j + 1, j] = 1.0
        self.chain = chain
        anc = np.concatenate([np.ones((K, 1)), chain], axis=1)  # (K, A)
        self.anc = anc
        self.parent_link = parent_link

        self.masses = np.array([l.mass for l in model.links])
        self.inertias = np.array([l.inertia for l in model.links])
        self.com_off = np.array([l.com_offset for l in model.links])    # (K, 2)
        self.joint_off = (np.array([j.offset for j in model.joints])
                          if J else np.zeros((0, 2)))                   # (J, 2)
        self.limits_lo = np.array([j.limits[0] for j in model.joints])
        self.limits_hi = np.array([j.limits[1] for j in model.joints])

        # constant angular inertia block: sum_k I_k w_k w_k^T over rotation axes
        m_ang = (anc * self.inertias[:, None]).T @ anc                  # (A, A)
        m_const = np.zeros((self.n, self.n))
        m_const[2:, 2:] = m_ang
        self.m_const = m_const

        if model.contact_points:
            self.cp_link = np.array([c[0] for c in model.contact_points], dtype=np.intp)
            self.cp_off = np.array([c[1] for c in model.contact_points])
            self.cp_anc = anc[self.cp_link]                             # (P, A)
        else:
            self.cp_link = np.zeros(0, dtype=np.intp)
            self.cp_off = np.zeros((0, 2))
            self.cp_anc = np.zeros((0, A))
        self.P = len(self.cp_link)
        self.gvec = np.array([0.0, -model.gravity])

        # fused point tables: link CoMs first, then contact points, so one
        # gather/rotate/Jacobian assembly serves both
        self.pt_link = np.concatenate([np.arange(K, dtype=np.intp), self.cp_link])
        self.pt_off = np.concatenate([self.com_off, self.cp_off], axis=0)
        self.pt_anc = np.concatenate([anc, self.cp_anc], axis=0)        # (K+P, A)
        # joint-position clamp bounds extended over the full coordinate vector
        self.pos_lo = np.concatenate([np.full(3, -np.inf), self.limits_lo])
        self.pos_hi = np.concatenate([np.full(3, np.inf), self.limits_hi])

    # -- kinematics -------------------------------------------------------

    def _rotate(self, c, s, off):
        """Rotate constant offsets ``off`` (...,2) by per-item angles c, s (...)."""
        ox, oy = off[..., 0], off[..., 1]
        rx = ad.sub(ad.mul(c, ox), ad.mul(s, oy))
        ry = ad.add(ad.mul(s, ox), ad.mul(c, oy))
        return ad.stack([rx, ry], axis=-1)

    def kinematics(self, pos):
        """FK quantities for batched position coordinates ``pos`` (B, 3+J).

        CoMs and contact points are processed as one fused point set: ``pts``
        holds the K link CoMs followed by the P contact points, and ``jac``
        their stacked world Jacobians (B, K+P, 2, n).
        """
        B = pos.shape[0]
        p = pos[:, 0:2]
        axes = pos[:, 2:]                                    # (B, A)
        phi = ad.matmul(axes, self.anc.T)                    # (B, K) link angles
        c, s = ad.cos(phi), ad.sin(phi)

        if self.J:
            cp = ad.take(c, self.parent_link, axis=1)        # parent-frame rotations
            sp = ad.take(s, self.parent_link, axis=1)
            r = self._rotate(cp, sp, self.joint_off)         # (B, J, 2) pivot - parent origin
            origins = ad.add(ad.reshape(p, (B, 1, 2)), ad.matmul(self.chain, r))
        else:
            r = None
            origins = ad.reshape(p, (B, 1, 2))

        rel = self._rotate(ad.take(c, self.pt_link, axis=1),
                           ad.take(s, self.pt_link, axis=1), self.pt_off)
        pts = ad.add(ad.take(origins, self.pt_link, axis=1), rel)     # (B, K+P, 2)

        # Jacobian columns for every rotation axis: perp(point - pivot_a);
        # the pivot of axis a is the origin of link a (root origin for theta)
        npts = self.K + self.P
        diff = ad.sub(ad.reshape(pts, (B, npts, 1, 2)), ad.reshape(origins, (B, 1, self.A, 2)))
        perp = ad.concat([ad.neg(diff[:, :, :, 1:2]), diff[:, :, :, 0:1]], axis=-1)
        jrot = ad.mul(perp, self.pt_anc[None, :, :, None])             # (B, K+P, A, 2)
        eye = np.broadcast_to(np.eye(2), (B, npts, 2, 2))
        jac = ad.concat([eye, ad.swapaxes(jrot, 2, 3)], axis=-1)       # (B, K+P, 2, n)
        return {"B": B, "p": p, "phi": phi, "c": c, "s": s, "r": r,
                "origins": origins, "rc": rel[:, : self.K], "coms": pts[:, : self.K],
                "cpts": pts[:, self.K:], "jac": jac}

    def mass_matrix(self, kin):
        jlink = kin["jac"][:, : self.K]
        jt = ad.swapaxes(jlink, -1, -2)                      # (B, K, n, 2)
        per_link = ad.matmul(jt, jlink)                      # (B, K, n, n)
        return ad.add(ad.sum_(ad.mul(per_link, self.masses[None, :, None, None]), axis=1),
                      self.m_const)

    def _bias_acceleration(self, kin, omegas):
        """Centripetal CoM acceleration per link with zero coordinate accel."""
        w2 = ad.mul(omegas, omegas)                          # (B, K)
        term = ad.mul(kin["rc"], ad.reshape(w2, (kin["B"], self.K, 1)))
        if self.J:
            wp2 = ad.take(w2, self.parent_link, axis=1)      # parent angle rates
            seg = ad.mul(kin["r"], ad.reshape(wp2, (kin["B"], self.J, 1)))
            term = ad.add(term, ad.matmul(self.chain, seg))
        return ad.neg(term)                                  # (B, K, 2)

    def contact_forces(self, kin, vel):
        """World contact forces (B,P,2) and the local force/velocity slopes
        (B,P,2) used for semi-implicit damping; (None, None) without contacts.
        """
        if self.P == 0:
            return None, None
        B = kin["B"]
        m = self.model
        pts = kin["cpts"]
        jc = kin["jac"][:, self.K:]
        v = ad.matmul(jc, ad.reshape(vel, (B, 1, self.n, 1)))        # (B, P, 2, 1)
        vx = v[:, :, 0, 0]
        vy = v[:, :, 1, 0]
        pen = ad.relu(ad.neg(pts[:, :, 1]))                           # (B, P)
        raw = ad.relu(ad.sub(ad.mul(pen, m.contact_stiffness), ad.mul(vy, m.contact_damping)))
        engaged = (ad._data(pen) > 0.0).astype(np.float64)
        fn = ad.mul(raw, engaged)
        sig = ad.tanh(ad.div(vx, m.friction_smoothing))
        ft = ad.neg(ad.mul(ad.mul(fn, m.friction), sig))
        force = ad.stack([ft, fn], axis=-1)                           # (B, P, 2)

        # -d(force)/d(velocity) per world axis, for the implicit velocity
        # update; the tanh slope m.friction * fn / v_s far exceeds the explicit
        # stability limit at 480 Hz, so it must be folded into the solve
        slope_x = ad.mul(ad.mul(fn, m.friction / m.friction_smoothing),
                         ad.sub(1.0, ad.mul(sig, sig)))
        active = (ad._data(raw) > 0.0).astype(np.float64) * engaged
        slope_y = m.contact_damping * active  # piecewise constant, stays off-tape
        slopes = ad.stack([slope_x, slope_y], axis=-1)                # (B, P, 2)
        return force, slopes

    # -- operations -------------------------------------------------------

    def pd_torque(self, q, qdot, target):
        """tau = k_p (target - q) - k_d qdot, clamped to the torque limit."""
        m = self.model
        target = ad.clamp(target, self.limits_lo, self.limits_hi)
        raw = ad.sub(ad.mul(ad.sub(target, q), m.k_p), ad.mul(qdot, m.k_d))
        return ad.clamp(raw, -m.torque_limit, m.torque_limit)

    def _promote(self, x, width):
        data = ad._data(x)
        if data.ndim == 1:
            return ad.reshape(x, (1, width)), True
        return x, False

    def step(self, state, action, dt):
        """One semi-implicit Euler substep; differentiable in state and action."""
        if dt <= 0:
            raise ValueError("dt must be positive")
        m = self.model
        state, squeeze = self._promote(state, m.state_dim)
        B = ad._data(state).shape[0]
        n = self.n
        pos = state[:, :n]
        vel = state[:, n:]

        kin = self.kinematics(pos)
        mass = self.mass_matrix(kin)
        omegas = ad.matmul(vel[:, 2:], self.anc.T)           # (B, K) link angular rates

        accel_c = self._bias_acceleration(kin, omegas)
        gv = ad.mul(ad.sub(self.gvec[None, None, :], accel_c),
                    self.masses[None, :, None])              # (B, K, 2) per-link force

        force, slopes = self.contact_forces(kin, vel)
        jt = ad.swapaxes(kin["jac"], -1, -2)                 # (B, K+P, n, 2)
        if force is not None:
            point_forces = ad.concat([gv, force], axis=1)    # (B, K+P, 2)
            # fold the contact damping slopes into the solve (one Newton step
            # of implicit Euler); explicit treatment is unstable at 480 Hz
            jc = kin["jac"][:, self.K:]
            js = ad.mul(jc, ad.reshape(slopes, (B, self.P, 2, 1)))
            mass = ad.add(mass, ad.mul(ad.sum_(ad.matmul(jt[:, self.K:], js), axis=1), dt))
        else:
            point_forces = gv
        rhs = ad.sum_(ad.matmul(jt, ad.reshape(point_forces, (B, self.K + self.P, 2, 1))),
                      axis=1)                                # (B, n, 1)

        if self.J:
            tau = self.pd_torque(pos[:, 3:], vel[:, 3:], action)
            rhs = ad.add(rhs, ad.reshape(ad.concat([np.zeros((B, 3)), tau], axis=1), (B, n, 1)))

        try:
            if m.fixed_root:
                acc_j = ad.solve(mass[:, 3:, 3:], rhs[:, 3:, :])
                acc = ad.concat([np.zeros((B, 3, 1)), acc_j], axis=1)
            else:
                acc = ad.solve(mass, rhs)
        except ad.ShapeError as err:
            raise SimulationError(f"mass-matrix solve failed: {err}") from err

        acc = ad.reshape(acc, (B, n))
        new_vel = ad.add(vel, ad.mul(acc, dt))
        new_pos = ad.clamp(ad.add(pos, ad.mul(new_vel, dt)), self.pos_lo, self.pos_hi)
        out = ad.concat([new_pos, new_vel], axis=1)

        if not np.all(np.isfinite(ad._data(out))):
            raise SimulationError("simulation produced a non-finite state")
        if squeeze:
            out = ad.reshape(out, (m.state_dim,))
        return out

    def control_step(self, state, action, control_hz=30, physics_hz=480):
        """Hold ``action`` fixed for physics_hz/control_hz substeps."""
        if physics_hz % control_hz != 0:
            raise ValueError("physics_hz must be an integer multiple of control_hz")
        substeps = physics_hz // control_hz
        dt = 1.0 / physics_hz
        for _ in range(substeps):
            state = self.step(state, action, dt)
        return state

    def rollout(self, state0, actions, control_hz=30, physics_hz=480):
        """States after each control step, starting with ``state0`` itself."""
        states = [state0]
        for action in actions:
            states.append(self.control_step(states[-1], action, control_hz, physics_hz))
        return states

    def apply_impulse(self, state, link, impulse):
        """Instantaneous impulse (N*s) at a link's CoM; positions unchanged."""
        m = self.model
        if not (0 <= link < len(m.links)):
            raise ValueError(f"unknown link index {link}")
        state, squeeze = self._promote(state, m.state_dim)
        B = ad._data(state).shape[0]
        pos = state[:, :self.n]
        vel = state[:, self.n:]
        kin = self.kinematics(pos)
        mass = self.mass_matrix(kin)
        jlink = kin["jac"][:, link, :, :]                    # (B, 2, n)
        imp = np.broadcast_to(np.asarray(impulse, dtype=np.float64).reshape(-1, 2, 1), (B, 2, 1))
        rhs = ad.matmul(ad.swapaxes(jlink, -1, -2), imp)
        if m.fixed_root:
            dv_j = ad.solve(mass[:, 3:, 3:], rhs[:, 3:, :])
            dv = ad.concat([np.zeros((B, 3, 1)), dv_j], axis=1)
        else:
            dv = ad.solve(mass, rhs)
        new_vel = ad.add(vel, ad.reshape(dv, (B, self.n)))
        out = ad.concat([pos, new_vel], axis=1)
        if squeeze:
            out = ad.reshape(out, (m.state_dim,))
        return out

    # -- diagnostics (plain numpy) ----------------------------------------

    def frames(self, state):
        """(origins (K,2), angles (K,)) for a single flat numpy state."""
        state = np.asarray(state, dtype=np.float64)
        kin = self.kinematics(state[None, : self.n])
        return kin["origins"][0], kin["phi"][0]

    def contact_positions(self, state):
        state = np.asarray(state, dtype=np.float64)
        kin = self.kinematics(state[None, : self.n])
        return kin["cpts"][0]

    def contact_probe(self, state):
        """(world points (P,2), world forces (P,2)) at a single numpy state."""
        state = np.asarray(state, dtype=np.float64)
        kin = self.kinematics(state[None, : self.n])
        force, _ = self.contact_forces(kin, state[None, self.n:])
        if force is None:
            return kin["cpts"][0], np.zeros((0, 2))
        return kin["cpts"][0], force[0]

    def com(self, state):
        state = np.asarray(state, dtype=np.float64)
        kin = self.kinematics(state[None, : self.n])
        return (kin["coms"][0] * self.masses[:, None]).sum(axis=0) / self.masses.sum()

    def mechanical_energy(self, state):
        """Kinetic plus gravitational potential energy of a numpy state."""
        state = np.asarray(state, dtype=np.float64)
        pos, vel = state[None, : self.n], state[None, self.n:]
        kin = self.kinematics(pos)
        mass = self.mass_matrix(kin)
        ke = 0.5 * float(vel[0] @ mass[0] @ vel[0])
        pe = float((kin["coms"][0, :, 1] * self.masses).sum() * self.model.gravity)
        return ke + pe
