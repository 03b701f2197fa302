"""
Reading parameter and experiment files.

Parameter files are YAML mappings with the keys K, theta, alpha, beta,
gamma, delta. Lines of the form `key = value` are accepted as well, e.g.

    K = 2
    theta = 1
    alpha = [1, 0.5]

Experiment files hold the sections `params`, `experiment` and
`tolerances`.
"""
import dataclasses
import re
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple, Union

import yaml

from . import C
from .params import BoundaryParams

_ASSIGNMENT = re.compile(r"^(\s*[A-Za-z_][A-Za-z0-9_]*)\s*=\s*(.*)$")

# metric -> (tolerance, calibrated); every metric passes when its value
# is <= the tolerance
DEFAULT_TOLERANCES = {
    "l1_profile": (0.05, True),
    "log_error_slope": (-0.5, True),
    "j_relative_error": (0.10, True),
    "k_relative_error": (0.10, True),
    "k_field_sigmas": (4.0, False),
    "l1_stationary": (0.05, True),
    "oracle_sigmas": (4.0, False),
    "stationary_residual": (1e-11, False),
    "mass_sup_error": (0.05, True),
    "terminal_mass_error": (0.05, True),
    "theta_gap_sigmas": (4.0, False),
    "ricatti_gap": (1e-8, False),
    "decomposition_error": (1e-12, False),
    "half_mass_error": (1e-12, False),
    "ratio_identity_error": (1e-10, False),
    "decay_bound_excess": (1e-10, False),
}


def _to_yaml(text: str) -> str:
    """Rewrite `key = value` lines as YAML `key: value` lines."""
    lines = []
    for line in text.splitlines():
        match = _ASSIGNMENT.match(line)
        lines.append(f"{match.group(1)}: {match.group(2)}" if match else line)
    return "\n".join(lines)


def parse_params_text(text: str) -> BoundaryParams:
    """Parameters from the text of a parameter file."""
    values = yaml.safe_load(_to_yaml(text))
    if not isinstance(values, Mapping):
        raise ValueError(f"parameter text does not describe a mapping: "
                         f"{text!r}")
    return BoundaryParams.from_mapping(values)


def load_params(path: Union[str, Path]) -> Tuple[BoundaryParams, str]:
    """
    Read a parameter file.

    Returns:
        The parameters and the verbatim file text (for output headers)
    """
    text = Path(path).read_text()
    return parse_params_text(text), text


def comment_header(*texts: str) -> str:
    """Prefix every line of the texts with '# '."""
    return "".join(f"# {line}\n" for text in texts
                   for line in text.splitlines())


@dataclasses.dataclass
class ToleranceTable:
    """
    The declarative pass/fail table: metric -> (tolerance, calibrated).
    A calibrated tolerance was set empirically, not derived.
    """
    entries: Dict[str, Tuple[float, bool]] = dataclasses.field(
        default_factory=lambda: dict(DEFAULT_TOLERANCES))

    @classmethod
    def from_mapping(cls, values: Optional[Mapping]) -> "ToleranceTable":
        """
        Defaults updated from a mapping metric -> number or
        metric -> {value: number, calibrated: bool}.
        """
        entries = dict(DEFAULT_TOLERANCES)
        for metric, entry in (values or {}).items():
            if isinstance(entry, Mapping):
                unknown = set(entry) - {"value", "calibrated"}
                if unknown:
                    raise ValueError(f"Unknown keys {sorted(unknown)} in "
                                     f"tolerance {metric!r}")
                default_calibrated = entries.get(metric, (None, True))[1]
                entries[metric] = (float(entry["value"]),
                                   bool(entry.get("calibrated",
                                                  default_calibrated)))
            else:
                calibrated = entries.get(metric, (None, True))[1]
                entries[metric] = (float(entry), calibrated)
        return cls(entries=entries)

    def __contains__(self, metric: str) -> bool:
        return metric in self.entries

    def tolerance(self, metric: str) -> Tuple[float, bool]:
        return self.entries[metric]


@dataclasses.dataclass
class ExperimentFile:
    """
    Content of an experiment file.

    Attributes:
        params: the model parameters
        params_text: the verbatim `params` section
        experiment: the ExperimentSpec fields given in the file
        tolerances: the tolerance table
    """
    params: Optional[BoundaryParams]
    params_text: str
    experiment: Dict
    tolerances: ToleranceTable


def load_experiment(path: Union[str, Path]) -> ExperimentFile:
    """
    Read an experiment file. The `params` section may be a mapping or a
    string in the `key = value` grammar.
    """
    content = yaml.safe_load(Path(path).read_text()) or {}
    unknown = set(content) - {"params", "experiment", "tolerances"}
    if unknown:
        raise ValueError(f"Unknown sections {sorted(unknown)} in {path}")
    section = content.get("params")
    if section is None:
        params, params_text = None, ""
    elif isinstance(section, str):
        params, params_text = parse_params_text(section), section
    else:
        params = BoundaryParams.from_mapping(section)
        params_text = yaml.safe_dump(section, sort_keys=False,
                                     default_flow_style=None)
    experiment = dict(content.get("experiment") or {})
    kind = experiment.get("kind")
    if kind is not None and kind not in C.EXPERIMENT_KINDS:
        raise ValueError(f"Unknown experiment kind {kind!r}, expected one of "
                         f"{list(C.EXPERIMENT_KINDS)}")
    return ExperimentFile(params=params, params_text=params_text,
                          experiment=experiment,
                          tolerances=ToleranceTable.from_mapping(
                              content.get("tolerances")))
