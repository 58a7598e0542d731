"""Feedback capacity of finite-alphabet channels with output memory."""

from .closedform import (BeumcoParams, BstmcoParams, BumcoParams, beumco_solve, beumco_steady_state,
                         bstmco_solve, bumco_cost_solve, bumco_cost_steady_state, bumco_solve,
                         bumco_steady_state)
from .dp import cost_constrained_capacity, solve_ftfi, solve_stage, verify_kkt
from .errors import (AbsoluteContinuityError, BracketError, BudgetError, ConfigurationError,
                     ConsistencyError, ConvergenceError, DomainError, FbcapError, RegimeError,
                     SchemaError)
from .kernels import (ChannelKernel, CostFunction, FiniteAlphabet, InitialCondition, InputPolicy,
                      MemoryWord, OutputKernel, binary_entropy, directed_information,
                      expected_cost, induce_output_kernel)

__version__ = "0.1.0"
