"""Tangent/adjoint sensitivities, linear range and linGrad for layered networks."""
from .net import (ConfigurationError, Dense, GeneralObjective, LayerJacobian,
                  LayerParams, Network, NumericError, ObjectiveGradients,
                  ObjectiveTerm, ParamSet, PerturbationDirection, Quadratic,
                  Residual, StateTrajectory, dense_network, forward, layer_apply,
                  layer_jacobian, logistic, objective_gradients, objective_value,
                  random_network, random_residual_network, unit_jacobian)
from .tangent import (Propagator, TangentSolution, propagator, sensitivity_tangent,
                      tangent_duhamel, tangent_exact, tangent_fd)
from .adjoint import (AdjointSolution, adjoint_duhamel, adjoint_propagator,
                      adjoint_solve, gradient_backprop, sensitivity_adjoint,
                      steepest_direction)
from .linrange import (DegenerateDirectionError, EscalationExhaustedError,
                       MeasureTooSmallError, NonlinearMeasurement, batch_epsilon,
                       linear_range_stepsize, measure_for_update,
                       measure_with_escalation, nonlinear_measurement,
                       scan_linear_range)
from .trainer import (StepsizeHistory, TrainerConfig, TrainerState, TrainRecord,
                      lingrad_minibatch, sgd_minibatch, train)
from .data import (Dataset, Sample, generate_teacher_dataset, load_mnist_idx,
                   metric_classification_error, metric_normalized_distance,
                   rng_streams)

__version__ = "0.1.0"
