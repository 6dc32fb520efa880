"""hvtlab: a measurement bench for classical hidden-variable models of a spin-1/2."""

from .qcore import (
    DensityMatrix,
    Direction,
    Outcome,
    born,
    broadcast_demo,
    collapse,
    direction_from_angles,
    expectation,
    mixture,
    partial_trace,
    spin_operator,
    up_projector,
)
from .grid import DirectionGrid, GridError
from .models import (
    BellState,
    BohmParams,
    BohmState,
    DiceState,
    EhvtState,
    IhvtState,
    Model,
    ModelError,
    ModelKind,
    Preparation,
    RepeatRule,
    bell_outcome,
    bell_post,
    bohm_draw_xi,
    bohm_evolve,
    ehvt_sample,
    ihvt_reduced,
    make_model,
    measure,
    naive_hvt_sx_check,
    naive_spectrum_check,
)
from .harness import (
    ExperimentReport,
    ExperimentSpec,
    QsFactReport,
    RepeatReport,
    TableReport,
    inconsistency_report,
    qs_facts_check,
    reproduce_table,
    run_device,
    run_repeat,
)
from .twospin import (
    SingletPair,
    SingletQM,
    chsh,
    correlation,
    joint_probs,
    measure_joint,
    nonlocality_witness,
    single_marginal,
)

__version__ = "0.1.0"
