"""Static SVG rendering of an instance and a closed tour."""

from __future__ import annotations

import xml.etree.ElementTree as ET

import numpy as np

from .instances import TspInstance, check_tour, tour_length

VIEWPORT = 800
MARGIN = 40


def _to_viewport(points: np.ndarray) -> np.ndarray:
    lo = points.min(axis=0)
    span = float((points.max(axis=0) - lo).max()) or 1.0
    scale = (VIEWPORT - 2 * MARGIN) / span
    xy = (points - lo) * scale + MARGIN
    xy[:, 1] = VIEWPORT - xy[:, 1]  # svg y axis points down
    return xy


def tour_svg(inst: TspInstance, tour) -> str:
    t = check_tour(inst, tour)
    xy = _to_viewport(inst.points)
    svg = ET.Element(
        "svg",
        xmlns="http://www.w3.org/2000/svg",
        width=str(VIEWPORT),
        height=str(VIEWPORT + 30),
        viewBox=f"0 0 {VIEWPORT} {VIEWPORT + 30}",
    )
    ET.SubElement(svg, "rect", width="100%", height="100%", fill="white")
    pts = " ".join(f"{xy[i, 0]:.2f},{xy[i, 1]:.2f}" for i in t)
    ET.SubElement(svg, "polygon", points=pts, fill="none", stroke="#1f77b4", attrib={"stroke-width": "2"})
    for i, (x, y) in enumerate(xy):
        dot = ET.SubElement(svg, "circle", cx=f"{x:.2f}", cy=f"{y:.2f}", r="4", fill="#d62728")
        ET.SubElement(dot, "title").text = str(i)
    caption = ET.SubElement(svg, "text", x=str(MARGIN), y=str(VIEWPORT + 20), attrib={"font-family": "monospace", "font-size": "14"})
    label = f"{inst.name} " if inst.name else ""
    caption.text = f"{label}n={inst.n} length={tour_length(inst, t):.6g}"
    return ET.tostring(svg, encoding="unicode")
