"""Python face of the histoforge C++ core."""

import json

try:
    from ._histoforge import (
        augment_image,
        augmentation_multiplicity,
        class_names,
        count_params,
        encode_image,
        evaluate_confusion_json,
        fnv1a64,
        gelu,
        normalize_image,
        random_encoder,
        run,
    )
except ImportError:  # extension built outside the package (test trees)
    from _histoforge import (
        augment_image,
        augmentation_multiplicity,
        class_names,
        count_params,
        encode_image,
        evaluate_confusion_json,
        fnv1a64,
        gelu,
        normalize_image,
        random_encoder,
        run,
    )


def evaluate_confusion(counts, class_names=()):
    """Evaluation report as a dict; rows of `counts` are true classes."""
    return json.loads(evaluate_confusion_json(counts, list(class_names)))


__all__ = [
    "augment_image",
    "augmentation_multiplicity",
    "class_names",
    "count_params",
    "encode_image",
    "evaluate_confusion",
    "evaluate_confusion_json",
    "fnv1a64",
    "gelu",
    "normalize_image",
    "random_encoder",
    "run",
]
