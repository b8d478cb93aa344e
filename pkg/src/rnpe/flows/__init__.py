from rnpe.flows.bnaf import BnafSpec, identity_bnaf_params, init_bnaf_params
from rnpe.flows.coupling import SplineFlowSpec, init_spline_params
from rnpe.flows.model import (
    FlowModel,
    FlowUsageError,
    flow_grad_log_prob_input,
    flow_log_prob,
    flow_sample,
)
from rnpe.flows.spline import rq_spline, rq_spline_apply

__all__ = [
    "BnafSpec",
    "FlowModel",
    "FlowUsageError",
    "SplineFlowSpec",
    "flow_grad_log_prob_input",
    "flow_log_prob",
    "flow_sample",
    "identity_bnaf_params",
    "init_bnaf_params",
    "init_spline_params",
    "rq_spline",
    "rq_spline_apply",
]
