"""Social conditioning: relationship embeddings, query, motion feature and offsets."""
from .nets import (
    GaussianOffsetNet,
    SocialEmbeddingTable,
    SocialModule,
    build_query,
    encode_time,
    motion_socialnet,
)
from .relationship import SocialRelationship, parse_relationship_flags

__all__ = [
    "GaussianOffsetNet", "SocialEmbeddingTable", "SocialModule", "SocialRelationship",
    "build_query", "encode_time", "motion_socialnet", "parse_relationship_flags",
]
