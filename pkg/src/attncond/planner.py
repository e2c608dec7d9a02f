"""Exact parameter counting for ViT-style encoders and trade-off tables.

Counting convention (standard encoder accounting):
  patch embed   patch^2 * channels * D + D     (conv projection + bias)
  token embed   vocab * D                      (lookup table, no bias)
  positions     (tokens + cls) * D
  cls token     D when present
  per layer     qkv 3*(D*D + D if qkv_bias), proj D*D + D,
                mlp D*H + H + H*D + D, norms 2*2*D when layernorm
  final norm    2*D when layernorm
  head          D * classes + classes

The depth-for-heads trade-off table supports both readings of "more
heads": constant head dim with growing width (embed_dim = h*d), and
constant width with shrinking per-head dim (d = D/h, counts independent
of h). Published per-variant totals for the grown-width sweep match
neither reading exactly; `tradeoff_table` reports computed values and
callers should treat the figure-annotated totals as approximate.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from .errors import ValidationError

__all__ = [
    "ArchSpec",
    "ParamBreakdown",
    "PerLayerParams",
    "TradeoffRow",
    "count_params",
    "tradeoff_table",
    "vit_base_spec",
]


@dataclass(frozen=True)
class ArchSpec:
    """Architecture description; image mode or token mode.

    Image mode sets image_size/patch_size/in_channels; token mode sets
    vocab_size/seq_len. head_dim may be None in fixed-width studies
    (parameter counts do not depend on it); when given it must satisfy
    embed_dim = num_heads * head_dim.
    """

    embed_dim: int
    depth: int
    num_heads: int
    mlp_hidden: int
    num_classes: int
    head_dim: int | None = None
    image_size: int | None = None
    patch_size: int | None = None
    in_channels: int | None = None
    vocab_size: int | None = None
    seq_len: int | None = None
    cls_token: bool = True
    qkv_bias: bool = True
    layernorm: bool = True

    def __post_init__(self):
        image_fields = (self.image_size, self.patch_size, self.in_channels)
        image_mode = all(f is not None for f in image_fields)
        token_mode = self.vocab_size is not None and self.seq_len is not None
        if image_mode == token_mode:
            raise ValidationError(
                "exactly one input mode required: image_size/patch_size/in_channels "
                "or vocab_size/seq_len"
            )
        if min(self.embed_dim, self.num_heads, self.mlp_hidden, self.num_classes) < 1:
            raise ValidationError("embed_dim, num_heads, mlp_hidden, num_classes must be >= 1")
        if self.depth < 0:
            raise ValidationError("depth must be >= 0")
        if self.head_dim is not None and self.embed_dim != self.num_heads * self.head_dim:
            raise ValidationError(
                f"embed_dim {self.embed_dim} != num_heads {self.num_heads} "
                f"* head_dim {self.head_dim}"
            )
        if image_mode:
            if self.image_size % self.patch_size != 0:
                raise ValidationError(
                    f"patch_size {self.patch_size} must divide image_size {self.image_size}"
                )
            if min(self.image_size, self.patch_size, self.in_channels) < 1:
                raise ValidationError("image fields must be >= 1")
        else:
            if self.vocab_size < 1 or self.seq_len < 1:
                raise ValidationError("vocab_size and seq_len must be >= 1")

    @property
    def token_count(self) -> int:
        if self.image_size is not None:
            return (self.image_size // self.patch_size) ** 2
        return self.seq_len


@dataclass(frozen=True)
class PerLayerParams:
    qkv: int
    proj: int
    mlp: int
    norms: int

    @property
    def total(self) -> int:
        return self.qkv + self.proj + self.mlp + self.norms


@dataclass(frozen=True)
class ParamBreakdown:
    patch_or_token_embed: int
    position_embed: int
    cls: int
    per_layer: PerLayerParams
    depth: int
    final_norm: int
    head: int
    total: int


@dataclass(frozen=True)
class TradeoffRow:
    depth: int
    heads: int
    total_params: int
    delta_vs_base_percent: float


def count_params(spec: ArchSpec) -> ParamBreakdown:
    """Exact integer parameter counts under the module's convention."""
    D = spec.embed_dim
    if spec.image_size is not None:
        embed = spec.patch_size**2 * spec.in_channels * D + D
    else:
        embed = spec.vocab_size * D
    positions = (spec.token_count + (1 if spec.cls_token else 0)) * D
    cls = D if spec.cls_token else 0
    qkv = 3 * (D * D + (D if spec.qkv_bias else 0))
    proj = D * D + D
    mlp = D * spec.mlp_hidden + spec.mlp_hidden + spec.mlp_hidden * D + D
    norms = 4 * D if spec.layernorm else 0
    per_layer = PerLayerParams(qkv=qkv, proj=proj, mlp=mlp, norms=norms)
    final_norm = 2 * D if spec.layernorm else 0
    head = D * spec.num_classes + spec.num_classes
    total = embed + positions + cls + spec.depth * per_layer.total + final_norm + head
    return ParamBreakdown(
        patch_or_token_embed=embed,
        position_embed=positions,
        cls=cls,
        per_layer=per_layer,
        depth=spec.depth,
        final_norm=final_norm,
        head=head,
        total=total,
    )


def vit_base_spec(num_classes: int = 1000) -> ArchSpec:
    """Canonical base encoder: 224/16/3, width 768, 12 layers, 12 heads."""
    return ArchSpec(
        embed_dim=768,
        depth=12,
        num_heads=12,
        head_dim=64,
        mlp_hidden=3072,
        num_classes=num_classes,
        image_size=224,
        patch_size=16,
        in_channels=3,
        cls_token=True,
        qkv_bias=True,
        layernorm=True,
    )


def tradeoff_table(
    base: ArchSpec,
    depths: list[int],
    head_counts: list[int],
    head_dim_fixed: bool,
) -> list[TradeoffRow]:
    """Totals over a (depth, heads) grid and deltas against the base.

    head_dim_fixed=True holds per-head width constant at base.head_dim so
    embed_dim grows as h*d (mlp_hidden stays at the base's absolute
    value; pass a modified base for other couplings). head_dim_fixed=
    False holds embed_dim constant so counts depend on depth only.
    """
    if not depths or not head_counts:
        raise ValidationError("depths and head_counts must be non-empty")
    if head_dim_fixed and base.head_dim is None:
        raise ValidationError("head_dim_fixed requires base.head_dim")
    base_total = count_params(base).total
    rows = []
    for depth in depths:
        for heads in head_counts:
            if head_dim_fixed:
                variant = replace(
                    base,
                    depth=depth,
                    num_heads=heads,
                    head_dim=base.head_dim,
                    embed_dim=heads * base.head_dim,
                )
            else:
                variant = replace(base, depth=depth, num_heads=heads, head_dim=None)
            total = count_params(variant).total
            delta = 100.0 * (total - base_total) / base_total
            rows.append(
                TradeoffRow(depth=depth, heads=heads, total_params=total, delta_vs_base_percent=delta)
            )
    return rows
