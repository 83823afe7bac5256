"""MCP Analysis Server extracting force metrics and comparing conditions via a Gradio interface."""

import json
import logging
import os
import sys

# Add the project root to the path to import config_loader and jamgrip
sys.path.insert(
    0,
    os.path.dirname(
        os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
    ),
)

import gradio as gr  # noqa: E402

from config_loader import get_config_loader, setup_logging  # noqa: E402
from jamgrip.errors import JamGripError  # noqa: E402
from jamgrip.metrics import extract_metrics  # noqa: E402
from jamgrip.rig import ForceTrace, PhaseSpan  # noqa: E402
from jamgrip.stats import pairwise_matrix  # noqa: E402

# Load configuration
config_loader = get_config_loader()
server_config = config_loader.get_server_config("analysis")
metrics_config = config_loader.get_metrics_config()
stats_config = config_loader.get_stats_config()

setup_logging()
logger = logging.getLogger(__name__)


def analyze_force_trace(
    csv_text: str,
    phases_json: str = "",
    smoothing_window: float = float(metrics_config["smoothing_window"]),
    gradient_threshold: float = float(metrics_config["gradient_threshold"]),
    min_prominence: float = float(metrics_config["min_prominence"]),
) -> str:
    """
    Extract push, holding and interlock forces from a load-cell trace.

    The trace uses the rig's sign convention: push (gripper pressing on the
    object) is positive, pull is negative. The holding force is the first
    valley after the load crosses zero whose approach is steeper than the
    gradient threshold; the interlock force is the last gentle valley
    before release.

    Args:
        csv_text (str): Two-column CSV "t_seconds,force_newtons", one sample
            per line, header optional.
        phases_json (str): Optional phase log as written next to trace
            files, e.g. [{"phase": "Lift", "start": 12.4, "end": 13.7}].
            With a Lift span the zero crossing is searched from lift start.
        smoothing_window (float): Moving-average window in seconds.
        gradient_threshold (float): Valley approach gradient in N/s that
            separates holding (steeper) from interlock (gentler).
        min_prominence (float): Minimum valley prominence in N.

    Returns:
        str: JSON string with the structure:
        {
            "push_force": 41.7,
            "holding_force": 12.9,
            "interlock_force": 4.3,
            "holding_detected": true,
            "zero_crossing_time": 13.05,
            "annotations": {"push": 2383, "zero_crossing": 12710, ...}
        }
        On failure: {"error": "..."}
    """
    try:
        trace = ForceTrace.from_csv_text(csv_text)
        if phases_json and phases_json.strip():
            trace.phases = [
                PhaseSpan.from_dict(d) for d in json.loads(phases_json)
            ]
        metrics = extract_metrics(
            trace,
            smoothing_window=float(smoothing_window),
            gradient_threshold=float(gradient_threshold),
            min_prominence=float(min_prominence),
        )
        logger.info(
            "Analyzed trace of %d samples: push %.3f N, hold %.3f N",
            len(trace),
            metrics.push_force,
            metrics.holding_force,
        )
        return json.dumps(metrics.to_dict())
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error analyzing force trace: %s", str(e))
        return json.dumps({"error": f"Error analyzing force trace: {str(e)}"})


def compare_conditions(
    groups_json: str,
    alpha: float = float(stats_config["alpha"]),
    correction: str = stats_config.get("correction", "none"),
) -> str:
    """
    Pairwise two-sided Mann-Whitney U tests between labelled samples.

    Args:
        groups_json (str): JSON object mapping condition labels to lists of
            values, e.g. {"0%": [11.2, 12.0], "150%": [13.9, 14.4]}.
            At least two groups, each non-empty.
        alpha (float): Significance level in (0, 1).
        correction (str): "none", "holm" or "bonferroni".

    Returns:
        str: JSON string with the structure:
        {
            "labels": ["0%", "150%"],
            "alpha": 0.05,
            "correction": "none",
            "pairs": [{"a": "0%", "b": "150%", "n_a": 2, "n_b": 2,
                       "u": 0.0, "p": 0.333, "p_adjusted": 0.333,
                       "significant": false}]
        }
        On failure: {"error": "..."}
    """
    try:
        groups = json.loads(groups_json)
        if not isinstance(groups, dict):
            raise ValueError("groups_json must be a JSON object")
        matrix = pairwise_matrix(
            groups, alpha=float(alpha), correction=str(correction)
        )
        logger.info(
            "Compared %d conditions, %d significant pairs",
            len(matrix.labels),
            len(matrix.significant_pairs()),
        )
        return json.dumps(matrix.to_dict())
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error comparing conditions: %s", str(e))
        return json.dumps({"error": f"Error comparing conditions: {str(e)}"})


trace_demo = gr.Interface(
    fn=analyze_force_trace,
    inputs=[
        gr.Textbox(
            placeholder="t_seconds,force_newtons\n0.000,0.0\n...",
            label="Trace CSV",
            lines=10,
        ),
        gr.Textbox(label="Phase log JSON (optional)", lines=3),
        gr.Number(
            label="Smoothing window (s)",
            value=float(metrics_config["smoothing_window"]),
        ),
        gr.Number(
            label="Gradient threshold (N/s)",
            value=float(metrics_config["gradient_threshold"]),
        ),
        gr.Number(
            label="Min prominence (N)",
            value=float(metrics_config["min_prominence"]),
        ),
    ],
    outputs=gr.JSON(label="Force metrics"),
    title="Force Trace Analysis",
    description="Push, holding and interlock forces from a load-cell trace.",
)

compare_demo = gr.Interface(
    fn=compare_conditions,
    inputs=[
        gr.Textbox(
            placeholder='{"0%": [11.2, 12.0, 11.7], "150%": [13.9, 14.4]}',
            label="Groups JSON",
            lines=6,
        ),
        gr.Number(label="Alpha", value=float(stats_config["alpha"])),
        gr.Dropdown(
            ["none", "holm", "bonferroni"],
            value=stats_config.get("correction", "none"),
            label="Correction",
        ),
    ],
    outputs=gr.JSON(label="Comparisons"),
    title="Condition Comparison",
    description="Pairwise Mann-Whitney U tests between conditions.",
)

demo = gr.TabbedInterface(
    [trace_demo, compare_demo],
    ["Trace", "Compare"],
    title="MCP Server - Grip Force Analysis",
)

# Launch the interface
if __name__ == "__main__":
    port = server_config["port"]
    logger.info("Starting %s", server_config["name"])
    logger.info("Launching Gradio interface on port %s", port)
    try:
        demo.launch(server_port=port, mcp_server=True)
        logger.info("%s started successfully", server_config["name"])
    except (ConnectionError, OSError, ValueError) as e:
        logger.error("Failed to start %s: %s", server_config["name"], str(e))
        raise
