"""Video-level verdicts from per-map predictions."""
import math
from dataclasses import dataclass

from .errors import InputError

REAL, FAKE = "real", "fake"


@dataclass(frozen=True)
class MapPrediction:
    probs: tuple
    map_id: str = ""

    @property
    def predicted(self):
        # an exact tie counts as real
        return FAKE if self.probs[1] > self.probs[0] else REAL


@dataclass(frozen=True)
class VideoVerdict:
    video: str
    verdict: str
    votes: dict
    mean_probs: tuple
    tie_break: bool

    def to_dict(self, per_map=None):
        out = {"video": self.video, "verdict": self.verdict, "votes": dict(self.votes),
               "mean_probs": list(self.mean_probs), "tie_break": self.tie_break}
        if per_map is not None:
            out["per_map"] = per_map
        return out


def video_verdict(preds, video=""):
    """Majority vote over maps; a tied vote goes to the larger mean probability.

    If the mean probabilities are exactly equal too, the verdict is real.
    """
    preds = list(preds)
    if not preds:
        raise InputError("cannot decide a video with no maps")
    n_fake = sum(p.predicted == FAKE for p in preds)
    n_real = len(preds) - n_fake
    # fsum is correctly rounded, so the mean does not depend on list order
    mean = [math.fsum(float(p.probs[c]) for p in preds) / len(preds) for c in (0, 1)]
    tie = n_fake == n_real
    if tie:
        verdict = FAKE if mean[1] > mean[0] else REAL
    else:
        verdict = FAKE if n_fake > n_real else REAL
    return VideoVerdict(video, verdict, {REAL: n_real, FAKE: n_fake},
                        (float(mean[0]), float(mean[1])), tie)
