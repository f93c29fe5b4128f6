"""Trajectory tracking, anomaly detection and trace rendering for an
overhead-view scene.

Subsystems:
    geometry   -- lens distortion correction and image-to-ground projection
    tracking   -- multi-target tracker (Kalman prediction, gated assignment)
    features   -- per-trajectory shape descriptors and rule classification
    normality  -- 4-D kernel-density normality model with ring-buffer training
    simulator  -- synthetic scene generator with labeled ground truth
    storage    -- daily session persistence (XML/CSV) and palette rules
    render     -- artistic raster renderer for accumulated tracks
    pipeline   -- end-to-end engine wiring detections to scores and sessions
    service    -- live HTTP/WebSocket bridge for the drawing UI
"""

__version__ = "0.1.0"
