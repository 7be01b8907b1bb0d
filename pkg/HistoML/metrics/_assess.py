"""Slide-level aggregation of region calls."""

# Authors: HistoML developers
# License: BSD 3 clause

from dataclasses import dataclass

from .._labels import ClassLabel, max_severity, to_binary


@dataclass(frozen=True)
class SlideAssessment:
    """Diagnosis of a slide: the most severe lesion found in it."""

    slide_id: str
    label3: ClassLabel
    label2: object
    region_calls: tuple = ()

    def to_json(self):
        return {
            "slide_id": self.slide_id,
            "label": self.label3.slug,
            "binary_label": self.label2.slug,
            "n_regions": len(self.region_calls),
            "regions": [
                {"region_id": call.region_id, "predicted": call.predicted.slug}
                for call in self.region_calls
            ],
        }


def assess_slide(calls, slide_id=None):
    """Slide label from its region calls.

    Parameters
    ----------
    calls : list of LesionCall
        Region classifications; may be empty.

    slide_id : str, default=None
        Identifier recorded in the assessment.

    Returns
    -------
    assessment : SlideAssessment
        ``label3`` is the most severe predicted class, NonCarcinoma when no
        region was proposed.

    Examples
    --------
    >>> from HistoML.metrics import assess_slide
    >>> assess_slide([]).label3.name
    'NonCarcinoma'
    """
    calls = tuple(calls)
    label3 = (
        max_severity(call.predicted for call in calls)
        if calls
        else ClassLabel.NonCarcinoma
    )
    return SlideAssessment(
        slide_id=slide_id, label3=label3, label2=to_binary(label3), region_calls=calls
    )
