"""This module provides the bipartite violation network of rules and cases.

Rule nodes are drawn large and blue, case nodes small and red. The layout is a degree-weighted force simulation:
every pair of nodes repels with k_r * (deg(u) + 1) * (deg(v) + 1) / d and every edge attracts with k_a * d.

Attributes:
    NetworkFormat (Enum): The supported export formats.
    NodeType (Enum): The two node types.
    DEFAULT_SYSTEMIC_THRESHOLD: The default case count from which a cluster is a systemic candidate.
"""

# Import standard modules
from dataclasses import dataclass, field, replace
from enum import Enum
from json import JSONDecodeError, dumps as json_dumps, loads as json_loads
from logging import getLogger
from string import Template
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple

# Import third-party modules
import networkx as nx
import numpy as np

# Import internal modules
from .engine import ViolationRecord
from .lang import LayerAuditError, LayerAuditException

NetworkFormat = Enum('NetworkFormat', ('json', 'graphml'))
NodeType = Enum('NodeType', ('rule', 'case'))

DEFAULT_SYSTEMIC_THRESHOLD = 10
NODE_COLORS = {NodeType.rule: 'blue', NodeType.case: 'red'}

type Position = Tuple[float, float]

log = getLogger(__name__)


class NetworkError(LayerAuditException):
    """Violation network Exceptions.

    Attributes:
        BAD_FORMAT: A network document could not be read.
        BAD_PARAMS: The layout parameters are out of range.
        EMPTY_NETWORK: A layout was requested for an empty network.
    """
    BAD_FORMAT = LayerAuditError(1, Template('Invalid network document: $err'))
    BAD_PARAMS = LayerAuditError(2, Template('Invalid layout parameter $name: $value'))
    EMPTY_NETWORK = LayerAuditError(3, Template('Unable to lay out an empty network'))


def node_id(node_type: NodeType, name: str, /) -> str:
    """Return the network node identifier of a rule or case, e.g. rule:R01."""
    return f'{node_type.name}:{name}'


def split_node_id(identifier: str, /) -> Tuple[NodeType, str]:
    """Split a node identifier into its type and name."""
    (type_name, _unused_sep, name) = identifier.partition(':')
    return (NodeType[type_name], name)


@dataclass(frozen=True)
class LayoutParams:
    """The force layout parameters.

        Attributes:
            attraction: The edge attraction coefficient k_a.
            repulsion: The node repulsion coefficient k_r.
            iterations: The maximum number of iterations.
            epsilon: The maximum node displacement below which the layout has converged.
            seed: The seed of the initial positions.
            max_step: The displacement cap of the first iteration, decaying linearly to zero.
    """
    attraction: float = 1.0
    repulsion: float = 1.0
    iterations: int = 500
    epsilon: float = 1e-6
    seed: int = 0
    max_step: float = 10.0

    def __post_init__(self):
        for name in ('attraction', 'repulsion', 'epsilon', 'max_step'):
            if not getattr(self, name) > 0:
                raise NetworkError(NetworkError.BAD_PARAMS, name=name, value=getattr(self, name))
        if self.iterations < 1:
            raise NetworkError(NetworkError.BAD_PARAMS, name='iterations', value=self.iterations)


@dataclass(frozen=True)
class ViolationNetwork:
    """The bipartite graph of violated rules and violating cases.

        Attributes:
            rule_nodes: The violation count per rule.
            case_nodes: The violation count per case.
            edges: The violation count per (rule_id, case_id) pair.
            positions: The layout position per node identifier, empty until laid out.
    """
    rule_nodes: Mapping[str, int] = field(default_factory=dict)
    case_nodes: Mapping[str, int] = field(default_factory=dict)
    edges: Mapping[Tuple[str, str], int] = field(default_factory=dict)
    positions: Mapping[str, Position] = field(default_factory=dict)

    node_ids = property(lambda s: sorted([node_id(NodeType.rule, r) for r in s.rule_nodes] + [node_id(NodeType.case, c) for c in s.case_nodes]),
                        doc='A read-only property which returns the sorted node identifiers.')
    is_empty = property(lambda s: not (s.rule_nodes or s.case_nodes), doc='A read-only property which returns True if the network has no nodes.')

    def size(self, identifier: str, /) -> int:
        """Return the violation count of a node."""
        (node_type, name) = split_node_id(identifier)
        return (self.rule_nodes if node_type == NodeType.rule else self.case_nodes)[name]

    def graph(self) -> nx.Graph:
        """Return the network as an undirected networkx graph with node and edge attributes."""
        graph = nx.Graph()
        for identifier in self.node_ids:
            node_type = split_node_id(identifier)[0]
            attributes: Dict[str, Any] = {'type': node_type.name, 'size': self.size(identifier), 'color': NODE_COLORS[node_type]}
            if identifier in self.positions:
                (attributes['x'], attributes['y']) = self.positions[identifier]
            graph.add_node(identifier, **attributes)
        for ((rule_id, case_id), weight) in sorted(self.edges.items()):
            graph.add_edge(node_id(NodeType.rule, rule_id), node_id(NodeType.case, case_id), weight=weight)
        return graph


def build_network(violations: Iterable[ViolationRecord], /) -> ViolationNetwork:
    """Build the violation network.

    Args:
        violations: The violations to include.

    Returns:
        The network with one node per violated rule and violating case.
    """
    rules: Dict[str, int] = {}
    cases: Dict[str, int] = {}
    edges: Dict[Tuple[str, str], int] = {}
    for violation in violations:
        rules[violation.rule_id] = rules.get(violation.rule_id, 0) + 1
        cases[violation.case_id] = cases.get(violation.case_id, 0) + 1
        edges[(violation.rule_id, violation.case_id)] = edges.get((violation.rule_id, violation.case_id), 0) + 1
    return ViolationNetwork(dict(sorted(rules.items())), dict(sorted(cases.items())), dict(sorted(edges.items())))


def layout(network: ViolationNetwork, params: Optional[LayoutParams] = None, /) -> ViolationNetwork:
    """Compute node positions with the force simulation.

    Each node moves by its net force divided by 4 * k_a * (deg + 1), capped at max_step * (1 - t / iterations).

    Args:
        network: The network to lay out.
        params (optional, default=None): The layout parameters, the defaults if None.

    Returns:
        A copy of the network with positions.

    Raises:
        NetworkError.EMPTY_NETWORK: If the network has no nodes.
    """
    if network.is_empty:
        raise NetworkError(NetworkError.EMPTY_NETWORK)
    params = params or LayoutParams()
    identifiers = network.node_ids
    index = {n: i for (i, n) in enumerate(identifiers)}
    count = len(identifiers)

    adjacency = np.zeros((count, count))
    for (rule_id, case_id) in network.edges:
        (u, v) = (index[node_id(NodeType.rule, rule_id)], index[node_id(NodeType.case, case_id)])
        adjacency[u, v] = adjacency[v, u] = 1.0
    mass = adjacency.sum(axis=1) + 1.0
    pair_mass = np.outer(mass, mass)
    np.fill_diagonal(pair_mass, 0.0)
    # coincident nodes are pushed apart along the x axis, lower index to the left
    tie_break = np.sign(np.subtract.outer(np.arange(count), np.arange(count))).astype(float)

    rng = np.random.default_rng(params.seed)
    positions = rng.uniform(-1.0, 1.0, size=(count, 2)) * max(1.0, np.sqrt(count))
    for iteration in range(params.iterations):
        delta = positions[:, np.newaxis, :] - positions[np.newaxis, :, :]
        distance = np.linalg.norm(delta, axis=2)
        coincident = (distance == 0.0) & (pair_mass > 0.0)
        delta[coincident] = np.stack([tie_break[coincident] * 1e-9, np.zeros(coincident.sum())], axis=1)
        distance = np.where(coincident, 1e-9, distance)
        safe = np.where(distance > 0.0, distance, 1.0)
        repulsion = (params.repulsion * pair_mass / (safe * safe))[:, :, np.newaxis] * delta
        attraction = (params.attraction * adjacency)[:, :, np.newaxis] * delta
        force = (repulsion - attraction).sum(axis=1)
        step = force / (4.0 * params.attraction * mass)[:, np.newaxis]

        cap = params.max_step * (1.0 - iteration / params.iterations)
        length = np.linalg.norm(step, axis=1)
        step *= np.minimum(1.0, cap / np.where(length > 0.0, length, 1.0))[:, np.newaxis]
        positions = positions + step
        if np.linalg.norm(step, axis=1).max() < params.epsilon:
            log.debug('Layout converged after %d iterations', iteration + 1)
            break
    return replace(network, positions={n: (float(positions[i, 0]), float(positions[i, 1])) for (n, i) in index.items()})


@dataclass(frozen=True)
class Cluster:
    """A connected component of the violation network."""
    rule_ids: Tuple[str, ...]
    case_ids: Tuple[str, ...]
    systemic_candidate: bool = False

    case_count = property(lambda s: len(s.case_ids), doc='A read-only property which returns the number of cases in the cluster.')
    node_count = property(lambda s: len(s.rule_ids) + len(s.case_ids), doc='A read-only property which returns the number of nodes in the cluster.')


def components(network: ViolationNetwork, /, threshold: int = DEFAULT_SYSTEMIC_THRESHOLD) -> List[Cluster]:
    """Find the clusters of the network.

    Args:
        network: The network.
        threshold (optional, default=DEFAULT_SYSTEMIC_THRESHOLD): The case count from which a cluster is a systemic candidate.

    Returns:
        The clusters, largest case count first.
    """
    clusters = []
    for component in nx.connected_components(network.graph()):
        members = [split_node_id(n) for n in sorted(component)]
        rule_ids = tuple(name for (node_type, name) in members if node_type == NodeType.rule)
        case_ids = tuple(name for (node_type, name) in members if node_type == NodeType.case)
        clusters.append(Cluster(rule_ids, case_ids, len(case_ids) >= threshold))
    return sorted(clusters, key=lambda c: (-c.case_count, c.rule_ids, c.case_ids))


def export_network(network: ViolationNetwork, network_format: NetworkFormat = NetworkFormat.json, /) -> str:
    """Export the network.

    Args:
        network: The network.
        network_format (optional, default=json): The document format.

    Returns:
        The document with nodes in identifier order; positions are included once computed.
    """
    graph = network.graph()
    if network_format == NetworkFormat.graphml:
        return '\n'.join(nx.generate_graphml(graph)) + '\n'
    document = {'nodes': [{'id': n, **graph.nodes[n]} for n in graph.nodes],
                'edges': [{'source': node_id(NodeType.rule, r), 'target': node_id(NodeType.case, c), 'weight': w} for ((r, c), w) in sorted(network.edges.items())]}
    return json_dumps(document, indent=2) + '\n'


def import_network(text: str, /) -> ViolationNetwork:
    """Read a network from its JSON export.

    Raises:
        NetworkError.BAD_FORMAT: If the document is not a valid network export.
    """
    try:
        document = json_loads(text)
        rules: Dict[str, int] = {}
        cases: Dict[str, int] = {}
        positions: Dict[str, Position] = {}
        for node in document['nodes']:
            (node_type, name) = split_node_id(node['id'])
            (rules if node_type == NodeType.rule else cases)[name] = int(node['size'])
            if ('x' in node) and ('y' in node):
                positions[node['id']] = (float(node['x']), float(node['y']))
        edges: Dict[Tuple[str, str], int] = {}
        for edge in document['edges']:
            (source, target) = sorted((split_node_id(edge['source']), split_node_id(edge['target'])), key=lambda n: n[0].value)
            if (source[0], target[0]) != (NodeType.rule, NodeType.case):
                raise ValueError(f'edge {edge["source"]} - {edge["target"]} does not join a rule and a case')
            edges[(source[1], target[1])] = int(edge['weight'])
    except (JSONDecodeError, KeyError, TypeError, ValueError) as err:
        raise NetworkError(NetworkError.BAD_FORMAT, err=err) from err
    return ViolationNetwork(dict(sorted(rules.items())), dict(sorted(cases.items())), dict(sorted(edges.items())), positions)

# cSpell:ignore graphml networkx newaxis linalg
