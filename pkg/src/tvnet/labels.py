from dataclasses import dataclass, field

DEFAULT_SEMANTICS = {"T": "informal", "V": "formal"}


@dataclass(frozen=True)
class LabelSet:
    """Ordered set of edge labels.

    The last label is the reference label: its dyad-feature weights and the
    weight of the triad made only of it are pinned to zero.
    """

    labels: tuple = ("T", "V")
    semantics: dict = field(default_factory=lambda: dict(DEFAULT_SEMANTICS), compare=False)

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) < 2:
            raise ValueError("a label set needs at least 2 labels")
        if len(set(labels)) != len(labels):
            raise ValueError(f"duplicate labels in {labels}")
        if any(not isinstance(x, str) or not x for x in labels):
            raise ValueError("labels must be nonempty strings")

    def __len__(self):
        return len(self.labels)

    def __iter__(self):
        return iter(self.labels)

    def index(self, label):
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"unknown label {label!r}; expected one of {self.labels}") from None

    @property
    def reference(self):
        return len(self.labels) - 1


BINARY = LabelSet()
