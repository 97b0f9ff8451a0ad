"""Budget-constrained iterative adversarial attacks with event-driven layer reuse."""

__version__ = "0.1.0"

from .attack import AttackConfig, AttackResult, ScheduleSpec, ifgsm, mifgsm, pgd, project, schedule_rho, spiking_pgd
from .net import Conv2d, Dense, Flatten, MaxPool2x2, Network, ReLU, backward, cross_entropy, forward, mac_cost, transpose_apply
from .spike import CostLedger, SpikeGateConfig, SpikeState, gate, relative_cost, spiking_backward, spiking_forward
from .tensor import SeededRandom, frobenius_norm, relative_change, uniform
