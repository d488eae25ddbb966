"""
Max-/min-trees, node attributes, attribute filtering and attribute-profile feature stacks

Trees come from higra's max-tree on the pixel adjacency graph (a min-tree is the
max-tree of 255 - f). higra keeps one leaf per pixel under the flat-zone node that
owns it; those flat-zone nodes are renumbered in level order from the root, so a
parent always has a smaller index than its children.
"""
import dataclasses
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, NamedTuple, Optional, Tuple, Union

import higra as hg
import numpy as np

from .models import Attribute, ConfigError, DataError, FilterRule, GrayImage, TreeKind
from .schemas import ThresholdBank

logger = logging.getLogger(__name__)

CONNECTIVITIES = (4, 8)

_ADJACENCY = {
    4: hg.get_4_adjacency_graph,
    8: hg.get_8_adjacency_graph,
}


class Node(NamedTuple):
    parent: int
    level: int
    pixels: np.ndarray  # flat indices of the pixels owned by the node itself
    removed: bool


@dataclass(frozen=True, eq=False)
class ComponentTree:
    kind: TreeKind
    parent: np.ndarray         # node -> parent node, the root points to itself
    levels: np.ndarray         # node -> gray level
    pixel_to_node: np.ndarray  # (rows, cols) -> owning node
    image: np.ndarray          # gray levels the tree was built from
    hierarchy: hg.Tree         # higra tree: pixel leaves under the flat-zone nodes
    hierarchy_nodes: np.ndarray  # node -> vertex of `hierarchy`
    connectivity: int = 4
    removed: Optional[np.ndarray] = None  # per-node flags set by filter_tree
    depth: Optional[np.ndarray] = None
    depth_groups: Optional[Tuple[np.ndarray, ...]] = None  # non-root nodes by depth, shallowest first

    root = 0

    def __post_init__(self):
        if self.depth is None:
            parent = self.parent.tolist()
            depth = [0] * len(parent)
            for node in range(1, len(parent)):
                depth[node] = depth[parent[node]] + 1
            object.__setattr__(self, "depth", np.asarray(depth, dtype=np.int64))
        if self.depth_groups is None:
            order = np.argsort(self.depth, kind="stable")
            counts = np.bincount(self.depth)
            groups = np.split(order, np.cumsum(counts)[:-1])
            object.__setattr__(self, "depth_groups", tuple(groups[1:]))

    @property
    def shape(self) -> Tuple[int, int]:
        return self.image.shape

    @property
    def node_count(self) -> int:
        return self.parent.shape[0]

    @cached_property
    def attributes(self) -> "AttributeTable":
        return compute_attributes(self)

    def children(self) -> Dict[int, List[int]]:
        result: Dict[int, List[int]] = {node: [] for node in range(self.node_count)}
        for node, par in enumerate(self.parent.tolist()):
            if node != par:
                result[par].append(node)
        return result

    def is_leaf(self) -> np.ndarray:
        has_child = np.zeros(self.node_count, dtype=bool)
        has_child[self.parent[1:]] = True
        return ~has_child

    def node(self, index: int) -> Node:
        return Node(
            parent=int(self.parent[index]),
            level=int(self.levels[index]),
            pixels=np.flatnonzero(self.pixel_to_node.ravel() == index),
            removed=bool(self.removed[index]) if self.removed is not None else False,
        )

    def subtree_pixels(self, index: int) -> np.ndarray:
        """Flat indices of every pixel in the connected region rooted at `index`."""
        inside = np.zeros(self.node_count, dtype=bool)
        inside[index] = True
        for group in self.depth_groups:
            inside[group] |= inside[self.parent[group]]
        return np.flatnonzero(inside[self.pixel_to_node.ravel()])


@dataclass(frozen=True)
class AttributeTable:
    """Per-node attributes evaluated over each node's full subtree support."""
    area: np.ndarray
    height: np.ndarray
    volume: np.ndarray
    diag: np.ndarray
    std: np.ndarray

    def __getitem__(self, attribute: Union[Attribute, str]) -> np.ndarray:
        return getattr(self, _as_attribute(attribute).value)


@dataclass(frozen=True)
class FeatureStack:
    bands: np.ndarray  # (m, rows, cols)
    provenance: Tuple[Tuple[TreeKind, Attribute, float], ...]

    def __post_init__(self):
        if self.bands.ndim != 3:
            raise DataError(f"feature stack must be (bands, rows, cols), got {self.bands.shape}")
        if self.bands.shape[0] != len(self.provenance):
            raise DataError(
                f"{self.bands.shape[0]} feature bands but {len(self.provenance)} provenance records"
            )

    @property
    def count(self) -> int:
        return self.bands.shape[0]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.bands.shape[1:]


def _as_attribute(attribute: Union[Attribute, str]) -> Attribute:
    try:
        return Attribute(attribute)
    except ValueError as e:
        raise ConfigError(f"unknown attribute {attribute!r}") from e


def invert(img: GrayImage) -> GrayImage:
    return GrayImage(255 - img.levels.astype(np.int64))


# ---------------------------------------------------------------------------
# Tree construction
# ---------------------------------------------------------------------------

def _build_component_tree(img: GrayImage, connectivity: int, kind: TreeKind) -> ComponentTree:
    if connectivity not in CONNECTIVITIES:
        raise ConfigError(f"connectivity must be 4 or 8, got {connectivity}")
    levels = img.levels.astype(np.int64).ravel()
    values = levels if kind is TreeKind.MAX else 255 - levels
    graph = _ADJACENCY[connectivity](img.shape)
    hierarchy, altitudes = hg.component_tree_max_tree(graph, values.astype(np.float64))

    n_pixels = hierarchy.num_leaves()
    hg_parent = hierarchy.parents()
    owner = hg_parent[:n_pixels] - n_pixels  # flat-zone node of every pixel, 0-based
    n_nodes = hierarchy.num_vertices() - n_pixels

    node_value = np.rint(altitudes[n_pixels:]).astype(np.int64)
    first_pixel = np.full(n_nodes, n_pixels, dtype=np.int64)
    np.minimum.at(first_pixel, owner, np.arange(n_pixels))
    # level order from the root, ties broken by the first owned pixel in row-major order
    order = np.lexsort((first_pixel, node_value))
    rank = np.empty(n_nodes, dtype=np.int64)
    rank[order] = np.arange(n_nodes)

    node_value = node_value[order]
    node_level = node_value if kind is TreeKind.MAX else 255 - node_value
    tree = ComponentTree(
        kind=kind,
        parent=rank[hg_parent[order + n_pixels] - n_pixels],
        levels=node_level,
        pixel_to_node=rank[owner].reshape(img.shape),
        image=img.levels.astype(np.int64),
        hierarchy=hierarchy,
        hierarchy_nodes=order + n_pixels,
        connectivity=connectivity,
    )
    logger.debug("[TREE] %s-tree: %d nodes over %dx%d pixels", kind.value, tree.node_count, *img.shape)
    return tree


def build_max_tree(img: GrayImage, connectivity: int = 4) -> ComponentTree:
    return _build_component_tree(img, connectivity, TreeKind.MAX)


def build_min_tree(img: GrayImage, connectivity: int = 4) -> ComponentTree:
    return _build_component_tree(img, connectivity, TreeKind.MIN)


def build_tree(img: GrayImage, kind: TreeKind, connectivity: int = 4) -> ComponentTree:
    return _build_component_tree(img, connectivity, TreeKind(kind))


# ---------------------------------------------------------------------------
# Attributes
# ---------------------------------------------------------------------------

def _accumulate(tree: ComponentTree, leaf_data: np.ndarray, accumulator) -> np.ndarray:
    """Accumulate per-pixel columns over every node's subtree, as exact int64."""
    totals = hg.accumulate_sequential(tree.hierarchy, leaf_data, accumulator)
    return np.rint(totals[tree.hierarchy_nodes]).astype(np.int64)


def compute_attributes(tree: ComponentTree) -> AttributeTable:
    """
    Area, height, volume, bounding-box diagonal and standard deviation of every node,
    each over the node's whole subtree. Height is fmax - fmin of the region, volume
    uses g = f on max-trees and g = -f on min-trees, std is the population std.
    """
    f = tree.image.ravel().astype(np.float64)
    rows, cols = np.divmod(np.arange(f.size), tree.shape[1])
    extent = np.column_stack([f, rows, cols]).astype(np.float64)

    area = np.rint(hg.attribute_area(tree.hierarchy)[tree.hierarchy_nodes]).astype(np.int64)
    s1, s2 = _accumulate(tree, np.column_stack([f, f * f]), hg.Accumulators.sum).T
    fmax, rmax, cmax = _accumulate(tree, extent, hg.Accumulators.max).T
    fmin, rmin, cmin = _accumulate(tree, extent, hg.Accumulators.min).T

    if tree.kind is TreeKind.MAX:
        volume = area * fmax - s1
    else:
        volume = s1 - area * fmin
    spread = area * s2 - s1 * s1
    return AttributeTable(
        area=area,
        height=fmax - fmin,
        volume=volume,
        diag=np.sqrt((rmax - rmin) ** 2 + (cmax - cmin) ** 2),
        std=np.sqrt(spread.astype(np.float64)) / area,
    )


# ---------------------------------------------------------------------------
# Filtering and reconstruction
# ---------------------------------------------------------------------------

def default_rule(attribute: Union[Attribute, str]) -> FilterRule:
    return FilterRule.PRUNE if _as_attribute(attribute).increasing else FilterRule.DIRECT


def filter_tree(
    tree: ComponentTree,
    attribute: Union[Attribute, str],
    threshold: float,
    rule: Optional[FilterRule] = None,
    attributes: Optional[AttributeTable] = None,
) -> ComponentTree:
    """
    Flag every non-root node whose attribute is below `threshold` as removed.
    Under the prune rule removal propagates to all descendants; under the direct rule
    each node is judged on its own. The input tree is left untouched.
    """
    attribute = _as_attribute(attribute)
    rule = FilterRule(rule) if rule is not None else default_rule(attribute)
    table = attributes if attributes is not None else tree.attributes
    removed = np.asarray(table[attribute]) < threshold
    removed[tree.root] = False
    if rule is FilterRule.PRUNE:
        for group in tree.depth_groups:
            removed[group] |= removed[tree.parent[group]]
    return dataclasses.replace(tree, removed=removed)


def reconstruct(tree: ComponentTree) -> np.ndarray:
    """Every pixel takes the level of its owning node's nearest preserved ancestor."""
    hierarchy = tree.hierarchy
    altitudes = np.zeros(hierarchy.num_vertices(), dtype=np.float64)
    altitudes[tree.hierarchy_nodes] = tree.levels
    # pixel leaves always defer to their flat-zone node
    deleted = np.zeros(hierarchy.num_vertices(), dtype=bool)
    deleted[:hierarchy.num_leaves()] = True
    if tree.removed is not None:
        deleted[tree.hierarchy_nodes] = tree.removed
    rebuilt = hg.reconstruct_leaf_data(hierarchy, altitudes, deleted)
    return np.asarray(rebuilt, dtype=np.float64).reshape(tree.shape)


def attribute_profile(
    tree: ComponentTree,
    attribute: Union[Attribute, str],
    thresholds: List[float],
) -> List[np.ndarray]:
    return [reconstruct(filter_tree(tree, attribute, threshold)) for threshold in thresholds]


def build_feature_stack(
    img: GrayImage,
    thresholds: Optional[ThresholdBank] = None,
    connectivity: int = 4,
) -> FeatureStack:
    """
    Attribute profiles of the max-tree then the min-tree, attributes in the order
    area, height, volume, diag, std, thresholds ascending.
    """
    thresholds = thresholds if thresholds is not None else ThresholdBank()
    if any(not thresholds.for_attribute(attribute) for attribute in Attribute):
        raise ConfigError("threshold bank has an empty attribute list")
    bands: List[np.ndarray] = []
    for kind in (TreeKind.MAX, TreeKind.MIN):
        tree = build_tree(img, kind, connectivity)
        for attribute in Attribute:
            bands.extend(attribute_profile(tree, attribute, thresholds.for_attribute(attribute)))
    provenance = tuple(thresholds.bands())
    logger.info("[FILTER] feature stack with %d bands over %dx%d", len(bands), *img.shape)
    return FeatureStack(bands=np.stack(bands), provenance=provenance)
