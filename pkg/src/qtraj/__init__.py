"""Wavefunction-free quantum trajectory dynamics in one and two dimensions."""

from .core import (
    BlowupError,
    CrossingError,
    DomainError,
    Eckart,
    Free,
    Harmonic,
    InputError,
    IntegrationError,
    PhysicalParams,
    Polynomial,
    SingularityError,
    erfinv,
    eval_potential,
    grad_potential,
)

__version__ = "0.1.0"
