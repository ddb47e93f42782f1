"""Forward kinematics and SVG frames of the link chain."""

import numpy as np

JOINT_COLOURS = ("red", "green", "blue", "purple")
LINK_COLOUR = "blue"


def joint_positions(lengths, q):
    """Positions of the fixed end and every link end, shape ``(n + 1, 2)``.

    ``q[0]`` is measured from the downward vertical and each later angle
    relative to the previous link, so link ``k`` points along the
    cumulative angle.  Coordinates: x to the right, y up.
    """
    q = np.asarray(q, dtype=float)
    lengths = np.asarray(lengths, dtype=float)
    if q.shape != lengths.shape:
        raise ValueError(f"{q.size} angles for {lengths.size} links")
    phi = np.cumsum(q)
    steps = lengths[:, None] * np.stack([np.sin(phi), -np.cos(phi)], axis=1)
    return np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])


def frame_indices(n_samples, n_frames):
    """``n_frames`` sample indices spread evenly from first to last."""
    if n_frames < 1:
        raise ValueError(f"frame count must be at least 1, got {n_frames}")
    if n_frames == 1:
        return np.array([n_samples - 1])
    return np.round(np.linspace(0, n_samples - 1, n_frames)).astype(int)


def render_svg(lengths, q, time=None, size=400):
    """One frame as an SVG document.

    The viewport spans ``+-1.1`` times the total chain length on both axes.
    """
    pts = joint_positions(lengths, q)
    half = 1.1 * float(np.sum(lengths))
    stroke = half / 80.0
    radius = half / 30.0
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="{-half:.6g} {-half:.6g} {2 * half:.6g} {2 * half:.6g}">',
        f'<rect x="{-half:.6g}" y="{-half:.6g}" width="{2 * half:.6g}" '
        f'height="{2 * half:.6g}" fill="white"/>',
        # flip so that y points up
        '<g transform="scale(1,-1)">',
    ]
    for a, b in zip(pts[:-1], pts[1:]):
        parts.append(
            f'<line x1="{a[0]:.6f}" y1="{a[1]:.6f}" x2="{b[0]:.6f}" y2="{b[1]:.6f}" '
            f'stroke="{LINK_COLOUR}" stroke-width="{stroke:.6g}"/>'
        )
    for k, p in enumerate(pts):
        colour = JOINT_COLOURS[min(k, len(JOINT_COLOURS) - 1)]
        parts.append(f'<circle cx="{p[0]:.6f}" cy="{p[1]:.6f}" r="{radius:.6g}" fill="{colour}"/>')
    parts.append("</g>")
    if time is not None:
        parts.append(
            f'<text x="{-0.95 * half:.6g}" y="{-0.85 * half:.6g}" '
            f'font-size="{half / 12:.6g}">t = {time:.3f} s</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
