"""29-gene search space: filter ratios, strides, K values, subsampling ratios.

The gene layout is fixed and ordered: 13 filter-ratio sites, 6 stride sites
(five encoder stages plus the bridge), 5 K sites, and 5 subsampling sites.
Every randomized operator takes an explicit ``random.Random`` and is a pure
function of its inputs, so a seeded run replays exactly.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

FILTER_RATIO_SITES = 13
STRIDE_SITES = 6
K_SITES = 5
SUBSAMPLING_SITES = 5
GENE_COUNT = FILTER_RATIO_SITES + STRIDE_SITES + K_SITES + SUBSAMPLING_SITES

DEFAULT_FILTER_RATIO_VALUES = (0.4, 0.6, 0.8, 1.0)
DEFAULT_STRIDE_VALUES = (1, 2, 3, 4)
DEFAULT_K_VALUES = (16, 18, 20, 22)
DEFAULT_SUBSAMPLING_VALUES = (2, 4, 6, 8)

# Subsampling schedule of the unmodified supernet.
SUPERNET_SUBSAMPLING = (4, 4, 4, 4, 2)

DEFAULT_MUTATION_PROB = 1.0 / GENE_COUNT


class GeneGroup(Enum):
    FILTER_RATIO = "filter_ratio"
    STRIDE = "stride"
    K = "k"
    SUBSAMPLING = "subsampling"


class MaskMode(Enum):
    FULL = "full"
    SAMPLING_ONLY = "sampling_only"
    ARCHITECTURAL_ONLY = "architectural_only"


class GenomeParseError(ValueError):
    """Malformed genome text/JSON, or a gene value outside the space."""


@dataclass(frozen=True)
class GeneSpec:
    """One gene: its group, position within the group, and legal values."""

    group: GeneGroup
    site_index: int
    allowed_values: tuple

    def __post_init__(self):
        object.__setattr__(self, "allowed_values", tuple(self.allowed_values))
        if not self.allowed_values:
            raise ValueError(f"{self.group.value}[{self.site_index}]: empty value set")
        if any(b <= a for a, b in zip(self.allowed_values, self.allowed_values[1:])):
            raise ValueError(
                f"{self.group.value}[{self.site_index}]: values must be strictly increasing"
            )


@dataclass(frozen=True)
class Genome:
    filter_ratios: tuple
    strides: tuple
    k_values: tuple
    subsampling: tuple

    def __post_init__(self):
        object.__setattr__(self, "filter_ratios", tuple(float(v) for v in self.filter_ratios))
        object.__setattr__(self, "strides", tuple(int(v) for v in self.strides))
        object.__setattr__(self, "k_values", tuple(int(v) for v in self.k_values))
        object.__setattr__(self, "subsampling", tuple(int(v) for v in self.subsampling))
        for name, values, count in (
            ("filter_ratios", self.filter_ratios, FILTER_RATIO_SITES),
            ("strides", self.strides, STRIDE_SITES),
            ("k_values", self.k_values, K_SITES),
            ("subsampling", self.subsampling, SUBSAMPLING_SITES),
        ):
            if len(values) != count:
                raise GenomeParseError(f"{name}: expected {count} values, got {len(values)}")

    def group_values(self, group: GeneGroup) -> tuple:
        return {
            GeneGroup.FILTER_RATIO: self.filter_ratios,
            GeneGroup.STRIDE: self.strides,
            GeneGroup.K: self.k_values,
            GeneGroup.SUBSAMPLING: self.subsampling,
        }[group]

    def canonical(self) -> str:
        """Canonical string form, stable across structurally equal genomes."""
        return "|".join(
            (
                "F:" + ",".join(f"{v:.1f}" for v in self.filter_ratios),
                "S:" + ",".join(str(v) for v in self.strides),
                "K:" + ",".join(str(v) for v in self.k_values),
                "R:" + ",".join(str(v) for v in self.subsampling),
            )
        )

    def to_json_dict(self) -> dict:
        return {
            "filter_ratios": list(self.filter_ratios),
            "strides": list(self.strides),
            "k": list(self.k_values),
            "subsampling": list(self.subsampling),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "Genome":
        if not isinstance(obj, dict):
            raise GenomeParseError(f"genome JSON must be an object, got {type(obj).__name__}")
        missing = {"filter_ratios", "strides", "k", "subsampling"} - set(obj)
        if missing:
            raise GenomeParseError(f"genome JSON missing fields: {sorted(missing)}")
        return cls(obj["filter_ratios"], obj["strides"], obj["k"], obj["subsampling"])


_GROUP_ORDER = (GeneGroup.FILTER_RATIO, GeneGroup.STRIDE, GeneGroup.K, GeneGroup.SUBSAMPLING)
_GROUP_SIZES = {
    GeneGroup.FILTER_RATIO: FILTER_RATIO_SITES,
    GeneGroup.STRIDE: STRIDE_SITES,
    GeneGroup.K: K_SITES,
    GeneGroup.SUBSAMPLING: SUBSAMPLING_SITES,
}


@dataclass(frozen=True)
class SearchSpace:
    """Ordered collection of the 29 gene specs."""

    genes: tuple

    def __post_init__(self):
        object.__setattr__(self, "genes", tuple(self.genes))
        if len(self.genes) != GENE_COUNT:
            raise ValueError(f"expected {GENE_COUNT} genes, got {len(self.genes)}")
        offset = 0
        for group in _GROUP_ORDER:
            size = _GROUP_SIZES[group]
            block = self.genes[offset : offset + size]
            for i, gene in enumerate(block):
                if gene.group is not group or gene.site_index != i:
                    raise ValueError(
                        f"gene {offset + i}: expected {group.value}[{i}], "
                        f"got {gene.group.value}[{gene.site_index}]"
                    )
            offset += size

    @classmethod
    def default(cls) -> "SearchSpace":
        genes = []
        for group, values in (
            (GeneGroup.FILTER_RATIO, DEFAULT_FILTER_RATIO_VALUES),
            (GeneGroup.STRIDE, DEFAULT_STRIDE_VALUES),
            (GeneGroup.K, DEFAULT_K_VALUES),
            (GeneGroup.SUBSAMPLING, DEFAULT_SUBSAMPLING_VALUES),
        ):
            for i in range(_GROUP_SIZES[group]):
                genes.append(GeneSpec(group, i, values))
        return cls(tuple(genes))

    def group_specs(self, group: GeneGroup) -> tuple:
        return tuple(g for g in self.genes if g.group is group)

    def validate_genome(self, genome: Genome) -> None:
        for group in _GROUP_ORDER:
            specs = self.group_specs(group)
            for i, (spec, value) in enumerate(zip(specs, genome.group_values(group))):
                if value not in spec.allowed_values:
                    raise GenomeParseError(
                        f"{group.value}[{i}]: {value} not in allowed values {spec.allowed_values}"
                    )

    def contains(self, genome: Genome) -> bool:
        try:
            self.validate_genome(genome)
        except GenomeParseError:
            return False
        return True


@dataclass(frozen=True)
class StageMask:
    """Freezes gene groups for staged searches.

    SAMPLING_ONLY leaves strides/K/subsampling free and pins filter ratios to
    ``base``; ARCHITECTURAL_ONLY does the opposite; FULL frees everything.
    """

    mode: MaskMode
    base: Genome | None = None

    def __post_init__(self):
        if self.mode is not MaskMode.FULL and self.base is None:
            raise ValueError(f"{self.mode.value} mask requires a base genome")

    def group_is_free(self, group: GeneGroup) -> bool:
        if self.mode is MaskMode.FULL:
            return True
        if self.mode is MaskMode.SAMPLING_ONLY:
            return group is not GeneGroup.FILTER_RATIO
        return group is GeneGroup.FILTER_RATIO

    def apply(self, genome: Genome) -> Genome:
        """Copy masked-out gene groups from the base genome."""
        if self.mode is MaskMode.FULL:
            return genome
        values = {}
        for group in _GROUP_ORDER:
            source = genome if self.group_is_free(group) else self.base
            values[group] = source.group_values(group)
        return Genome(
            values[GeneGroup.FILTER_RATIO],
            values[GeneGroup.STRIDE],
            values[GeneGroup.K],
            values[GeneGroup.SUBSAMPLING],
        )


def full_mask() -> StageMask:
    return StageMask(MaskMode.FULL)


def supernet_genome() -> Genome:
    """The unmodified supernet: unit ratios, unit strides, K=16, baseline sampling."""
    return Genome(
        (1.0,) * FILTER_RATIO_SITES,
        (1,) * STRIDE_SITES,
        (16,) * K_SITES,
        SUPERNET_SUBSAMPLING,
    )


def cardinality(space: SearchSpace, mask: StageMask) -> int:
    """Number of distinct genomes reachable under the mask."""
    return math.prod(
        len(g.allowed_values) for g in space.genes if mask.group_is_free(g.group)
    )


def random_genome(space: SearchSpace, mask: StageMask, rng: random.Random) -> Genome:
    values = {group: [] for group in _GROUP_ORDER}
    for gene in space.genes:
        if mask.group_is_free(gene.group):
            values[gene.group].append(gene.allowed_values[rng.randrange(len(gene.allowed_values))])
        else:
            values[gene.group].append(mask.base.group_values(gene.group)[gene.site_index])
    return _from_group_values(values)


def _from_group_values(values: dict) -> Genome:
    return Genome(
        values[GeneGroup.FILTER_RATIO],
        values[GeneGroup.STRIDE],
        values[GeneGroup.K],
        values[GeneGroup.SUBSAMPLING],
    )


def crossover(
    a: Genome, b: Genome, mask: StageMask, rng: random.Random
) -> tuple[Genome, Genome]:
    """Uniform crossover on unmasked genes.

    Per gene, a fair coin picks which parent feeds child one; child two gets
    the other parent's value. Masked genes come from the mask base.
    """
    child1 = {group: [] for group in _GROUP_ORDER}
    child2 = {group: [] for group in _GROUP_ORDER}
    for group in _GROUP_ORDER:
        free = mask.group_is_free(group)
        for site, (va, vb) in enumerate(zip(a.group_values(group), b.group_values(group))):
            if free:
                if rng.random() < 0.5:
                    child1[group].append(va)
                    child2[group].append(vb)
                else:
                    child1[group].append(vb)
                    child2[group].append(va)
            else:
                base_value = mask.base.group_values(group)[site]
                child1[group].append(base_value)
                child2[group].append(base_value)
    return _from_group_values(child1), _from_group_values(child2)


def mutate(
    space: SearchSpace,
    genome: Genome,
    mask: StageMask,
    rng: random.Random,
    per_gene_prob: float = DEFAULT_MUTATION_PROB,
) -> Genome:
    """Resample each unmasked gene with probability ``per_gene_prob``.

    A triggered gene is drawn uniformly from its other allowed values, so a
    mutation always changes the gene (when more than one value exists).
    """
    if not 0.0 <= per_gene_prob <= 1.0:
        raise ValueError(f"per_gene_prob must be in [0, 1], got {per_gene_prob}")
    values = {group: list(genome.group_values(group)) for group in _GROUP_ORDER}
    for gene in space.genes:
        if not mask.group_is_free(gene.group):
            continue
        if rng.random() < per_gene_prob:
            current = values[gene.group][gene.site_index]
            others = [v for v in gene.allowed_values if v != current]
            if others:
                values[gene.group][gene.site_index] = others[rng.randrange(len(others))]
    return _from_group_values(values)


def encode(genome: Genome) -> str:
    return genome.canonical()


def decode(text: str, space: SearchSpace | None = None) -> Genome:
    """Parse a canonical genome string, validating membership in the space."""
    if space is None:
        space = SearchSpace.default()
    parts = text.strip().split("|")
    if len(parts) != 4:
        raise GenomeParseError(f"expected 4 sections F|S|K|R, got {len(parts)}")
    expected = {"F": "filter_ratios", "S": "strides", "K": "k_values", "R": "subsampling"}
    parsed = {}
    for part, (prefix, field) in zip(parts, expected.items()):
        if not part.startswith(prefix + ":"):
            raise GenomeParseError(f"{field}: section must start with '{prefix}:'")
        tokens = part[len(prefix) + 1 :].split(",")
        cast = float if prefix == "F" else int
        try:
            parsed[field] = [cast(tok) for tok in tokens]
        except ValueError as exc:
            raise GenomeParseError(f"{field}: {exc}") from None
    genome = Genome(
        parsed["filter_ratios"], parsed["strides"], parsed["k_values"], parsed["subsampling"]
    )
    space.validate_genome(genome)
    return genome
