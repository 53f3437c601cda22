"""Spin-Hamiltonian simulation of endohedral fullerene qubits (N@C60 and relatives)."""

from .config import ConfigError, ScenarioConfig, load_config, parse_config
from .dynamics import (DensityMatrix, InhomogeneityModel, PulseSegment, PulseSequence,
                       RelaxationParams, concurrence, entangling_time, exchange_evolution,
                       propagate, rabi_envelope, rotating_frame, simulate_eseem,
                       simulate_nuclear_rabi, simulate_rabi, thermal_state)
from .gates import (CompositeSequence, ErrorModel, RotationSpec, bb1_sequence, fidelity_sweep,
                    gate_fidelity, naive_sequence, realize)
from .hamiltonian import (CouplingSpec, add_c13, build_dimer_hamiltonian,
                          build_static_hamiltonian, dipolar_coupling)
from .scenarios import RunReport, run_scenario
from .spectral import (C13Profile, EigenSystem, MixtureComponent, TransitionLine,
                       composite_spectrum, diagonalize, isotopologue_weights,
                       perturbative_levels, perturbative_transitions,
                       synthesize_cw_spectrum, transitions)
from .species import FieldConfig, SpeciesParams, get_species, preset_names, resonant_field
from .spin_algebra import SpinOperator, commutator, embed, spin_matrices
from .traces import SpectrumTrace, read_trace, write_trace

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
