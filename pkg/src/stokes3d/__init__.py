"""Bifurcation toolkit for 3d gravity-capillary traveling waves on 2d lattices.

Submodules: lattice (dispersion, resonant sets), kernel (kernel coordinates),
geometry (cone and level-set topology), cohomology (exact equivariant
cup-length certificates), models (invariant model Hamiltonians), dynamics
(speed selection, straightening, momentum-preserving flows), cli (front end).
"""

from .lattice import (INFINITE_DEPTH, DualVector, LatticeSpec, PhysicalParams,
                      ResonantSet, bifurcation_line, design_resonance,
                      enumerate_dual, linearized_multipliers, Mj, omega,
                      phase_speed, resonant_set)
from .kernel import (DirectionClass, GroupElement, KernelPoint, KernelSpace,
                     act, det_identity, momentum, momentum_gradient,
                     momentum_pairing_matrix, partition_directions)
from .geometry import (ConeClassification, ResonanceCone, Topology, Verdict,
                       classify_momentum, cone, direction_classes,
                       join_parametrize, level_set_functions, xi_inverse,
                       xi_map)
from .cohomology import (GradedIdeal, GradedPolynomial, critical_value_bound,
                         cuplength_lower_bound, euler_linear, euler_product,
                         ideal_member, join_annihilator, orbit_bound_certificate,
                         product_annihilator, sphere_annihilator, witness_class)
from .models import (ModelHamiltonian, ModelTerm, action_monomials,
                     enumerate_invariant_monomials, random_action_model,
                     random_invariant_model, read_model, write_model)
from .dynamics import (EngineConfig, CriticalOrbit, FlowResult,
                       distinct_critical_values, find_critical_orbits,
                       flow_field, moser_straighten, mu_solve,
                       phi_gradient, reduced_hamiltonian, reduced_momentum,
                       run_flow, speed, two_d_level)

__version__ = "0.1.0"
