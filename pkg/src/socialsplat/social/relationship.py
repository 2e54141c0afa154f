from __future__ import annotations

from dataclasses import dataclass

from ..errors import ValidationError


@dataclass(frozen=True)
class SocialRelationship:
    """One of four states on the blood / equality axes."""

    blood: bool
    equal: bool

    @classmethod
    def all(cls):
        return [cls(b, e) for b in (True, False) for e in (True, False)]

    @property
    def index(self):
        """Class id in 0..3, following ``all()`` order."""
        return 2 * (not self.blood) + (not self.equal)

    def flipped(self):
        return SocialRelationship(not self.blood, not self.equal)

    def to_manifest(self):
        return {"blood": self.blood, "equal": self.equal}

    @classmethod
    def from_manifest(cls, d):
        if not isinstance(d, dict) or set(d) != {"blood", "equal"}:
            raise ValidationError(f"relationship must be {{'blood': bool, 'equal': bool}}, got {d!r}")
        if not all(isinstance(v, bool) for v in d.values()):
            raise ValidationError(f"relationship flags must be booleans, got {d!r}")
        return cls(d["blood"], d["equal"])

    def __str__(self):
        return f"{'blood' if self.blood else 'non-blood'},{'equal' if self.equal else 'non-equal'}"


_BLOOD = {"blood": True, "non-blood": False, "non_blood": False}
_EQUAL = {"equal": True, "non-equal": False, "non_equal": False}


def parse_relationship_flags(tokens):
    """Parse e.g. ``["blood", "non-equal"]`` or ``"blood,non-equal"``."""
    if isinstance(tokens, str):
        tokens = tokens.replace(",", " ").split()
    blood = [_BLOOD[t] for t in tokens if t in _BLOOD]
    equal = [_EQUAL[t] for t in tokens if t in _EQUAL]
    unknown = [t for t in tokens if t not in _BLOOD and t not in _EQUAL]
    if unknown or len(blood) != 1 or len(equal) != 1:
        raise ValidationError(
            f"relationship needs one of blood|non-blood and one of equal|non-equal, got {list(tokens)}")
    return SocialRelationship(blood[0], equal[0])
