"""
JSON project configuration, validated with Django REST framework serializers.

Matrices are nested lists or structured generators, e.g.
``{"generator": "identity", "n": 74}`` or
``{"generator": "consensus", "graph": "complete", "n": 222, "tau_gain": 0.9}``.
Vectors are lists or ``{"fill": -13, "size": 222}``.
"""

import json
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from rest_framework import serializers

from core.certificates.storage import StorageCertificate
from core.dynamics.systems import (
    Network,
    Nonlinearity,
    NonlinearityKind,
    SystemModel,
    complete_graph_laplacian,
    consensus_coupling,
    path_graph_laplacian,
)
from core.exceptions import ConfigInvalid, NetabsError
from core.linalg.matlib import as_matrix, block_diag
from core.montecarlo.policies import DEFAULT_SATURATION, DEFAULT_TOLERANCE, AbstractPolicy, PolicyKind
from core.speclang.labeling import Box, LabeledPartition, PropositionLabeling
from core.speclang.scltl import parse_scltl

logger = logging.getLogger(__name__)

GRAPH_LAPLACIANS = {
    'complete': complete_graph_laplacian,
    'path': path_graph_laplacian,
}


def expand_matrix(spec) -> np.ndarray:
    """
    Nested list or generator document -> 2-D array.

    Raises:
        ValueError: unknown generator or bad parameters
    """
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return as_matrix(spec)
    if isinstance(spec, list):
        return as_matrix(spec)
    if not isinstance(spec, dict) or 'generator' not in spec:
        raise ValueError("Expected a nested list or a generator object")

    kind = spec['generator']
    if kind == 'identity':
        return np.eye(int(spec['n']))
    if kind == 'zeros':
        return np.zeros((int(spec['rows']), int(spec['cols'])))
    if kind == 'ones':
        return np.ones((int(spec['rows']), int(spec.get('cols', 1))))
    if kind == 'unit_row':
        size, index = int(spec['size']), int(spec.get('index', 0))
        if not 0 <= index < size:
            raise ValueError(f"unit_row index {index} outside 0..{size - 1}")
        row = np.zeros((1, size))
        row[0, index] = 1.0
        return row
    if kind == 'scaled':
        return float(spec['factor']) * expand_matrix(spec['of'])
    if kind == 'block_diag':
        blocks = spec.get('blocks') or []
        if not blocks:
            raise ValueError("block_diag needs at least one block")
        return block_diag(*[expand_matrix(b) for b in blocks])
    if kind == 'complete_graph_laplacian':
        return complete_graph_laplacian(int(spec['n']))
    if kind == 'path_graph_laplacian':
        return path_graph_laplacian(int(spec['n']))
    if kind == 'consensus':
        graph = spec.get('graph', 'complete')
        if graph not in GRAPH_LAPLACIANS:
            raise ValueError(f"Unknown graph '{graph}', expected one of {sorted(GRAPH_LAPLACIANS)}")
        L = GRAPH_LAPLACIANS[graph](int(spec['n']))
        if 'tau' in spec:
            return consensus_coupling(L, tau=float(spec['tau']))
        if 'tau_gain' in spec:
            return consensus_coupling(L, tau_gain=float(spec['tau_gain']))
        raise ValueError("consensus generator needs 'tau' or 'tau_gain'")
    raise ValueError(f"Unknown matrix generator '{kind}'")


class MatrixField(serializers.Field):
    default_error_messages = {
        'invalid': 'Invalid matrix: {message}',
    }

    def to_internal_value(self, data):
        try:
            return expand_matrix(data)
        except (ValueError, KeyError, TypeError) as exc:
            self.fail('invalid', message=str(exc))

    def to_representation(self, value):
        return np.asarray(value, dtype=float).tolist()


class VectorField(serializers.Field):
    default_error_messages = {
        'invalid': 'Invalid vector: {message}',
    }

    def to_internal_value(self, data):
        try:
            if isinstance(data, dict):
                vector = np.full(int(data['size']), float(data['fill']))
            else:
                vector = np.asarray(data, dtype=float).reshape(-1)
        except (ValueError, KeyError, TypeError) as exc:
            self.fail('invalid', message=str(exc))
        if not np.all(np.isfinite(vector)):
            self.fail('invalid', message='non-finite entries')
        return vector

    def to_representation(self, value):
        return np.asarray(value, dtype=float).reshape(-1).tolist()


class SlopeField(serializers.Field):
    """Positive number or the string "inf"."""

    def to_internal_value(self, data):
        if data == 'inf':
            return math.inf
        try:
            value = float(data)
        except (TypeError, ValueError):
            raise serializers.ValidationError('Expected a positive number or "inf".')
        if not value > 0:
            raise serializers.ValidationError('Slope bound must be positive.')
        return value

    def to_representation(self, value):
        return 'inf' if math.isinf(value) else float(value)


class EnumChoiceField(serializers.ChoiceField):
    def to_representation(self, value):
        return getattr(value, 'value', value)


class BoxField(serializers.Field):
    """A box as a list of [lo, hi] intervals, one per axis."""

    def to_internal_value(self, data):
        try:
            return Box.from_intervals(data)
        except (ValueError, TypeError, IndexError, NetabsError) as exc:
            raise serializers.ValidationError(f"Invalid box: {exc}")

    def to_representation(self, value):
        return value.intervals()


# Serializers

class NonlinearitySerializer(serializers.Serializer):
    kind = EnumChoiceField(choices=[k.value for k in NonlinearityKind], default=NonlinearityKind.ZERO.value)
    slope_bound = SlopeField(default=1.0)
    shift = serializers.FloatField(default=0.0)
    table_x = serializers.ListField(child=serializers.FloatField(), required=False, default=list)
    table_y = serializers.ListField(child=serializers.FloatField(), required=False, default=list)

    def validate(self, data):
        try:
            phi = Nonlinearity(**data)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        if phi.kind == NonlinearityKind.TABLE and not phi.check_slope():
            raise serializers.ValidationError(
                f"custom-table nonlinearity violates the slope bound {phi.slope_bound}"
            )
        return data


class SystemSerializer(serializers.Serializer):
    A = MatrixField()
    B = MatrixField()
    C1 = MatrixField()
    C2 = MatrixField()
    D = MatrixField()
    E = MatrixField(required=False)
    F = MatrixField(required=False)
    R = MatrixField()
    phi = NonlinearitySerializer(required=False)

    def validate(self, data):
        try:
            data['model'] = build_system(data)
        except ValueError as exc:
            raise serializers.ValidationError(str(exc))
        return data


class CertificateSerializer(serializers.Serializer):
    Mtil = MatrixField()
    K = MatrixField()
    Q = MatrixField()
    L1 = MatrixField()
    L2 = MatrixField()
    Z = MatrixField()
    G = MatrixField()
    Ghat = MatrixField()
    H = MatrixField()
    P = MatrixField()
    Rtil = MatrixField()
    Xbar11 = MatrixField()
    Xbar12 = MatrixField()
    Xbar21 = MatrixField()
    Xbar22 = MatrixField()
    kappa_hat = serializers.FloatField()
    k_til = serializers.FloatField(min_value=0.0)


class SubsystemSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=100)
    concrete = SystemSerializer()
    abstract = SystemSerializer()
    certificate = CertificateSerializer()


class PartitionSerializer(serializers.Serializer):
    regions = serializers.DictField(child=serializers.ListField(child=BoxField(), min_length=1))
    default = serializers.CharField(max_length=50)


class SpecSerializer(serializers.Serializer):
    formula = serializers.CharField()
    props = serializers.DictField(child=serializers.ListField(child=BoxField(), min_length=1), required=False)
    partition = PartitionSerializer(required=False)
    epsilon = serializers.FloatField(min_value=0.0)
    horizon = serializers.IntegerField(min_value=0)

    def validate_formula(self, value):
        try:
            parse_scltl(value)
        except NetabsError as exc:
            raise serializers.ValidationError(str(exc))
        return value

    def validate_epsilon(self, value):
        if value <= 0:
            raise serializers.ValidationError("Epsilon must be positive.")
        return value

    def validate(self, data):
        if ('props' in data) == ('partition' in data):
            raise serializers.ValidationError("Give exactly one of 'props' and 'partition'.")
        return data


class PolicySerializer(serializers.Serializer):
    kind = EnumChoiceField(choices=[k.value for k in PolicyKind])
    saturation = serializers.FloatField(min_value=0.0, default=DEFAULT_SATURATION)
    value = VectorField(required=False, allow_null=True)
    table = MatrixField(required=False, allow_null=True)
    waypoints = MatrixField(required=False, allow_null=True)
    tolerance = serializers.FloatField(min_value=0.0, default=DEFAULT_TOLERANCE)

    def validate(self, data):
        required = {
            PolicyKind.CONSTANT.value: 'value',
            PolicyKind.LOOKUP_TABLE.value: 'table',
            PolicyKind.WAYPOINT.value: 'waypoints',
        }[data['kind']]
        if data.get(required) is None:
            raise serializers.ValidationError(f"{data['kind']} policy needs '{required}'.")
        return data


class InitialSerializer(serializers.Serializer):
    x0 = VectorField()
    xhat0 = VectorField()


class BoundSerializer(serializers.Serializer):
    epsilons = serializers.ListField(child=serializers.FloatField(min_value=0.0), min_length=1)
    horizons = serializers.ListField(child=serializers.IntegerField(min_value=0), min_length=1)
    nuhat_sup = serializers.FloatField(min_value=0.0, default=0.0)


class MonteCarloSerializer(serializers.Serializer):
    trials = serializers.IntegerField(min_value=0)
    seed = serializers.IntegerField(min_value=0, max_value=(1 << 64) - 1)
    epsilons = serializers.ListField(child=serializers.FloatField(min_value=0.0), required=False, default=list)


class ProjectConfigSerializer(serializers.Serializer):
    name = serializers.CharField(max_length=100, default='project')
    subsystems = SubsystemSerializer(many=True, allow_empty=False)
    mu = serializers.ListField(child=serializers.FloatField(), min_length=1)
    coupling = MatrixField()
    spec = SpecSerializer(required=False, allow_null=True)
    policy = PolicySerializer(required=False, allow_null=True)
    initial = InitialSerializer(required=False, allow_null=True)
    bound = BoundSerializer(required=False, allow_null=True)
    mc = MonteCarloSerializer(required=False, allow_null=True)

    def validate_mu(self, value):
        if any(v <= 0 for v in value):
            raise serializers.ValidationError("Weights must be positive.")
        return value

    def validate(self, data):
        count = len(data['subsystems'])
        if len(data['mu']) != count:
            raise serializers.ValidationError(f"mu has {len(data['mu'])} entries for {count} subsystems.")
        concs = [s['concrete']['model'] for s in data['subsystems']]
        absts = [s['abstract']['model'] for s in data['subsystems']]
        try:
            Network(concs, data['coupling'])
        except NetabsError as exc:
            raise serializers.ValidationError({'coupling': str(exc)})
        initial = data.get('initial')
        if initial:
            n, nh = sum(s.n for s in concs), sum(s.n for s in absts)
            if initial['x0'].size != n or initial['xhat0'].size != nh:
                raise serializers.ValidationError(
                    {'initial': f"Initial states must have dimensions {n} and {nh}."}
                )
        spec = data.get('spec')
        if spec:
            q = sum(s.q1 for s in concs)
            regions = spec.get('props') or spec['partition']['regions']
            dims = {box.dim for boxes in regions.values() for box in boxes}
            if dims != {q}:
                raise serializers.ValidationError({'spec': f"Label boxes must have dimension {q}, got {sorted(dims)}."})
        policy = data.get('policy')
        if policy and policy.get('waypoints') is not None:
            nh = sum(s.n for s in absts)
            if policy['waypoints'].shape[1] != nh:
                raise serializers.ValidationError({'policy': f"Waypoints must have {nh} columns."})
        return data

    def create(self, validated_data):
        return build_project(validated_data)


# Domain objects

@dataclass(frozen=True, eq=False)
class SubsystemConfig:
    name: str
    concrete: SystemModel
    abstract: SystemModel
    certificate: StorageCertificate


@dataclass(frozen=True, eq=False)
class SpecConfig:
    formula: str
    epsilon: float
    horizon: int
    props: Optional[Dict[str, List[Box]]] = None
    partition: Optional[LabeledPartition] = None

    def labeling(self) -> Union[PropositionLabeling, LabeledPartition]:
        if self.props is not None:
            return PropositionLabeling(self.props)
        return self.partition

    def alphabet(self) -> Dict[str, frozenset]:
        if self.props is not None:
            return PropositionLabeling(self.props).alphabet()
        return {letter: frozenset({letter}) for letter in self.partition.letters}


@dataclass(frozen=True, eq=False)
class PolicyConfig:
    kind: str
    saturation: float = DEFAULT_SATURATION
    value: Optional[np.ndarray] = None
    table: Optional[np.ndarray] = None
    waypoints: Optional[np.ndarray] = None
    tolerance: float = DEFAULT_TOLERANCE

    def build(self, abst_net: Network) -> AbstractPolicy:
        return AbstractPolicy(kind=self.kind, saturation=self.saturation, value=self.value, table=self.table,
                              waypoints=self.waypoints, tolerance=self.tolerance, network=abst_net)


@dataclass(frozen=True, eq=False)
class InitialConfig:
    x0: np.ndarray
    xhat0: np.ndarray


@dataclass(frozen=True)
class BoundConfig:
    epsilons: Tuple[float, ...]
    horizons: Tuple[int, ...]
    nuhat_sup: float = 0.0


@dataclass(frozen=True)
class MonteCarloConfig:
    trials: int
    seed: int
    epsilons: Tuple[float, ...] = ()


@dataclass(eq=False)
class ProjectConfig:
    name: str
    subsystems: List[SubsystemConfig]
    mu: List[float]
    coupling: np.ndarray
    spec: Optional[SpecConfig] = None
    policy: Optional[PolicyConfig] = None
    initial: Optional[InitialConfig] = None
    bound: Optional[BoundConfig] = None
    mc: Optional[MonteCarloConfig] = None

    @property
    def concs(self) -> List[SystemModel]:
        return [s.concrete for s in self.subsystems]

    @property
    def absts(self) -> List[SystemModel]:
        return [s.abstract for s in self.subsystems]

    @property
    def certs(self) -> List[StorageCertificate]:
        return [s.certificate for s in self.subsystems]

    def concrete_network(self) -> Network:
        return Network(self.concs, self.coupling)

    def abstract_network(self, Mhat: np.ndarray) -> Network:
        return Network(self.absts, Mhat)


def build_system(data: dict) -> SystemModel:
    A = data['A']
    n = A.shape[0]
    phi = Nonlinearity(**data['phi']) if data.get('phi') else Nonlinearity()
    return SystemModel(
        A=A, B=data['B'], C1=data['C1'], C2=data['C2'], D=data['D'],
        E=data['E'] if data.get('E') is not None else np.zeros((n, 1)),
        F=data['F'] if data.get('F') is not None else np.zeros((1, n)),
        R=data['R'], phi=phi,
    )


def build_project(data: dict) -> ProjectConfig:
    subsystems = []
    for item in data['subsystems']:
        conc = item['concrete']['model']
        abst = item['abstract']['model']
        name = item['name']
        subsystems.append(SubsystemConfig(
            name=name,
            concrete=replace(conc, name=name),
            abstract=replace(abst, name=f"{name}-abstract"),
            certificate=StorageCertificate(**item['certificate'], name=name),
        ))

    spec = None
    if data.get('spec'):
        raw = data['spec']
        partition = None
        if raw.get('partition'):
            partition = LabeledPartition(regions=raw['partition']['regions'], default=raw['partition']['default'])
        spec = SpecConfig(formula=raw['formula'], epsilon=raw['epsilon'], horizon=raw['horizon'],
                          props=raw.get('props'), partition=partition)

    policy = PolicyConfig(**data['policy']) if data.get('policy') else None
    initial = InitialConfig(**data['initial']) if data.get('initial') else None
    bound = None
    if data.get('bound'):
        raw = data['bound']
        bound = BoundConfig(epsilons=tuple(raw['epsilons']), horizons=tuple(raw['horizons']),
                            nuhat_sup=raw['nuhat_sup'])
    mc = None
    if data.get('mc'):
        raw = data['mc']
        mc = MonteCarloConfig(trials=raw['trials'], seed=raw['seed'], epsilons=tuple(raw['epsilons']))

    return ProjectConfig(
        name=data['name'], subsystems=subsystems, mu=list(data['mu']), coupling=data['coupling'],
        spec=spec, policy=policy, initial=initial, bound=bound, mc=mc,
    )


def _flatten_errors(errors, prefix='') -> List[str]:
    lines = []
    if isinstance(errors, dict):
        for key, value in errors.items():
            lines.extend(_flatten_errors(value, f"{prefix}.{key}" if prefix else str(key)))
    elif isinstance(errors, list):
        for index, value in enumerate(errors):
            if isinstance(value, (dict, list)):
                lines.extend(_flatten_errors(value, f"{prefix}[{index}]"))
            else:
                lines.append(f"{prefix}: {value}" if prefix else str(value))
    else:
        lines.append(f"{prefix}: {errors}" if prefix else str(errors))
    return lines


def load_config(source: Union[str, Path, dict]) -> ProjectConfig:
    """
    Validate a config document (a path or an already-parsed dict).

    Raises:
        ConfigInvalid: unreadable file, malformed JSON or schema violations
    """
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        try:
            document = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigInvalid(f"Cannot read config {path}: {exc}")
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"Malformed JSON in {path}: {exc}")
    if not isinstance(document, dict):
        raise ConfigInvalid("Config document must be a JSON object")

    serializer = ProjectConfigSerializer(data=document)
    if not serializer.is_valid():
        raise ConfigInvalid('; '.join(_flatten_errors(serializer.errors)))
    config = serializer.save()
    logger.info("Loaded config '%s' with %d subsystems", config.name, len(config.subsystems))
    return config


def dump_config(config: ProjectConfig) -> dict:
    """Explicit document (generators expanded) that loads back to the same config."""
    spec = config.spec
    spec_view = None
    if spec is not None:
        spec_view = {'formula': spec.formula, 'epsilon': spec.epsilon, 'horizon': spec.horizon}
        if spec.props is not None:
            spec_view['props'] = {name: [b.intervals() for b in boxes] for name, boxes in spec.props.items()}
        else:
            spec_view['partition'] = {
                'regions': {k: [b.intervals() for b in v] for k, v in spec.partition.regions.items()},
                'default': spec.partition.default,
            }

    document = {
        'name': config.name,
        'subsystems': [
            {
                'name': s.name,
                'concrete': SystemSerializer(s.concrete).data,
                'abstract': SystemSerializer(s.abstract).data,
                'certificate': CertificateSerializer(s.certificate).data,
            }
            for s in config.subsystems
        ],
        'mu': [float(v) for v in config.mu],
        'coupling': MatrixField().to_representation(config.coupling),
    }
    if spec_view is not None:
        document['spec'] = spec_view
    if config.policy is not None:
        document['policy'] = PolicySerializer(config.policy).data
    if config.initial is not None:
        document['initial'] = InitialSerializer(config.initial).data
    if config.bound is not None:
        document['bound'] = BoundSerializer(config.bound).data
    if config.mc is not None:
        document['mc'] = MonteCarloSerializer(config.mc).data
    return json.loads(json.dumps(document))
