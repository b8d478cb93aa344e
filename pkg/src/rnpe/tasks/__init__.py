from rnpe.tasks.base import GaussianPosterior, Task
from rnpe.tasks.cs import CellPattern, CsConfig, CsTask
from rnpe.tasks.gaussian import GaussianTask
from rnpe.tasks.gaussian_linear import GaussianLinearTask
from rnpe.tasks.sir import SirConfig, SirTask

TASKS = {
    "gaussian": GaussianTask,
    "gaussian_linear": GaussianLinearTask,
    "sir": SirTask,
    "cs": CsTask,
}


def get_task(name: str, **options) -> Task:
    """Build a task; ``options`` are flat constructor or simulator-config keys."""
    key = name.lower().replace("-", "_")
    if key not in TASKS:
        raise KeyError(f"unknown task {name!r}; choose from {sorted(TASKS)}")
    if key == "sir" and options:
        extra = {k: options.pop(k) for k in ("upper", "reduction") if k in options}
        return SirTask(SirConfig(**options), **extra)
    if key == "cs" and options:
        return CsTask(CsConfig(**options))
    return TASKS[key](**options)


__all__ = [
    "TASKS",
    "CellPattern",
    "CsConfig",
    "CsTask",
    "GaussianLinearTask",
    "GaussianPosterior",
    "GaussianTask",
    "SirConfig",
    "SirTask",
    "Task",
    "get_task",
]
