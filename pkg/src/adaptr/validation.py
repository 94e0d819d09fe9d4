"""Input checks shared by the estimators."""
from __future__ import annotations


def _as_token_list(seq, what, i):
    if isinstance(seq, str):
        raise TypeError(f"{what}[{i}] is a string; expected a sequence of tokens")
    seq = list(seq)
    for tok in seq:
        if not isinstance(tok, str):
            raise TypeError(f"{what}[{i}] contains a non-string token {tok!r}")
    return seq


def check_token_lists(X, y=None):
    """Validate ``X`` (and ``y``) as lists of token lists of equal length."""
    if isinstance(X, str):
        raise TypeError("X must be a list of token sequences, not a string")
    X = [_as_token_list(s, "X", i) for i, s in enumerate(X)]
    if y is None:
        return X
    if isinstance(y, str):
        raise TypeError("y must be a list of token sequences, not a string")
    y = [_as_token_list(s, "y", i) for i, s in enumerate(y)]
    if len(X) != len(y):
        raise ValueError(f"X and y have different lengths ({len(X)} != {len(y)})")
    return X, y


def check_windows(X, y=None):
    """Validate diarizer input: windows of utterance token lists plus 0/1 labels."""
    windows = []
    for i, w in enumerate(X):
        w = list(w)
        if not w:
            raise ValueError(f"window {i} is empty")
        windows.append([_as_token_list(u, f"X[{i}]", j) for j, u in enumerate(w)])
    if y is None:
        return windows
    labels = []
    for i, (w, lab) in enumerate(zip(windows, y)):
        lab = [int(v) for v in lab]
        if len(lab) != len(w):
            raise ValueError(f"window {i}: {len(w)} utterances but {len(lab)} labels")
        if any(v not in (0, 1) for v in lab):
            raise ValueError(f"window {i}: labels must be 0 or 1")
        labels.append(lab)
    if len(labels) != len(windows):
        raise ValueError(f"X and y have different lengths ({len(windows)} != {len(labels)})")
    return windows, labels
