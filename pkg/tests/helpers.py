"""Shared builders for randomized and hand-constructed test fixtures."""

import numpy as np

from leggedkf.contact import StiffnessDamping
from leggedkf.dynamics import GRAVITY
from leggedkf.so3 import Rotation
from leggedkf.state import ContactInput, ContactState, EstimatorState, ImuInput, InputFrame


def random_state(rng, n_imus=1, contact_ids=(0, 1)) -> EstimatorState:
    """Random state at physically plausible scales."""
    contacts = []
    for cid in contact_ids:
        contacts.append(
            ContactState(
                cid,
                rng.normal(scale=0.5, size=3),
                Rotation.exp(rng.normal(scale=0.1, size=3)),
                rng.normal(scale=100.0, size=3),
                rng.normal(scale=10.0, size=3),
            )
        )
    return EstimatorState(
        rng.normal(scale=0.5, size=3),
        Rotation.random(rng),
        rng.normal(scale=0.3, size=3),
        rng.normal(scale=0.3, size=3),
        rng.normal(scale=0.05, size=(n_imus, 3)),
        rng.normal(scale=20.0, size=3),
        rng.normal(scale=5.0, size=3),
        contacts,
    )


def random_input(rng, state: EstimatorState, mass=100.0) -> InputFrame:
    """Random input frame structurally matching ``state``."""
    a = rng.normal(scale=0.3, size=(3, 3))
    inertia = 10.0 * np.eye(3) + a @ a.T
    contacts = {}
    for cid in state.contact_ids:
        contacts[cid] = ContactInput(
            position=rng.normal(scale=0.4, size=3) + np.array([0.0, 0.0, -0.8]),
            rotation=Rotation.exp(rng.normal(scale=0.1, size=3)),
            velocity=rng.normal(scale=0.1, size=3),
            angular_velocity=rng.normal(scale=0.1, size=3),
            flex=StiffnessDamping.default(),
        )
    imus = [
        ImuInput(
            position=rng.normal(scale=0.2, size=3),
            rotation=Rotation.exp(rng.normal(scale=0.1, size=3)),
            velocity=rng.normal(scale=0.05, size=3),
            angular_velocity=rng.normal(scale=0.05, size=3),
            acceleration=rng.normal(scale=0.2, size=3),
        )
        for _ in range(state.n_imus)
    ]
    return InputFrame(
        mass=mass,
        inertia=inertia,
        inertia_dot=rng.normal(scale=0.01, size=(3, 3)),
        momentum=rng.normal(scale=0.1, size=3),
        momentum_dot=rng.normal(scale=0.05, size=3),
        force_residual=rng.normal(scale=5.0, size=3),
        torque_residual=rng.normal(scale=2.0, size=3),
        contacts=contacts,
        imus=imus,
    )


def standing_equilibrium(mass=100.0, stiffness=None, half_spacing=0.1, height=0.9):
    """Exact two-foot static equilibrium: (state, input).

    Feet at centroid-frame offsets (0, +-half_spacing, -height), identity
    orientations, springs compressed to carry mg/2 each.  Every velocity and
    acceleration is zero and the state is a fixed point of the transition.
    """
    flex = stiffness if stiffness is not None else StiffnessDamping.default()
    weight = mass * GRAVITY
    sink = weight / 2.0 / flex.linear_stiffness[2]
    contacts = []
    inputs = {}
    for cid, side in ((0, 1.0), (1, -1.0)):
        offset = np.array([0.0, side * half_spacing, -height])
        world_pos = offset + np.array([0.0, 0.0, height])  # state world position is (0,0,height)
        contacts.append(
            ContactState(
                cid,
                world_pos + np.array([0.0, 0.0, sink]),
                Rotation.identity(),
                np.array([0.0, 0.0, weight / 2.0]),
                np.zeros(3),
            )
        )
        inputs[cid] = ContactInput(position=offset, rotation=Rotation.identity(), flex=flex)
    state = EstimatorState(
        np.array([0.0, 0.0, height]),
        Rotation.identity(),
        np.zeros(3),
        np.zeros(3),
        np.zeros((1, 3)),
        np.zeros(3),
        np.zeros(3),
        contacts,
    )
    u = InputFrame(
        mass=mass,
        inertia=np.diag([10.0, 10.0, 5.0]),
        contacts=inputs,
        imus=[ImuInput(position=np.array([0.0, 0.0, 0.3]))],
    )
    return state, u
