"""MCP Rig Server running simulated grip cycles and relaxation tests via a Gradio interface."""

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
from jamgrip.dem_core import SimConfig, build_world  # noqa: E402
from jamgrip.errors import JamGripError  # noqa: E402
from jamgrip.membrane import PressureState  # noqa: E402
from jamgrip.metrics import extract_metrics, metrics_from_config  # noqa: E402
from jamgrip.rig import (  # noqa: E402
    GripCycleConfig,
    Phase,
    RelaxationConfig,
    indentation_stiffness,
    object_contact_count,
    relaxation_protocol,
    relaxation_residuals,
    run_grip_cycle,
)
from jamgrip.waveform import WaveformSpec  # noqa: E402

# Load configuration
config_loader = get_config_loader()
server_config = config_loader.get_server_config("rig")

setup_logging()
logger = logging.getLogger(__name__)

REFERENCE_DISPLACEMENT = float(
    config_loader.get_waveform_config()["reference_displacement"]
)


def _world(seed: int, grain_count: int, start_height: float):
    sim = SimConfig.from_config(config_loader).with_overrides(
        rng_seed=int(seed), mount_height=start_height
    )
    if grain_count:
        sim = sim.with_overrides(grain_count=int(grain_count))
    return build_world(sim)


def _thin(trace, points: int):
    stride = max(1, len(trace) // max(1, int(points)))
    return {
        "t": [round(v, 4) for v in trace.t[::stride].tolist()],
        "f": [round(v, 4) for v in trace.f[::stride].tolist()],
        "phases": [span.to_dict() for span in trace.phases],
    }


def run_grip_test(
    waveform_json: str = "",
    seed: int = 0,
    grain_count: int = 0,
    push_height: float = 0.0,
    trace_points: int = 500,
) -> str:
    """
    Run one simulated grip test and extract its force metrics.

    The virtual rig zeroes the load cell, descends onto the target object
    while the exciter plays the waveform, applies the vacuum, lifts and
    releases. The load cell trace is analysed for the push force (peak
    downward load), the holding force (first steep pull-off valley after
    the load crosses zero on lift) and the interlock force (a later gentle
    valley, if present).

    Args:
        waveform_json (str): JSON waveform description, e.g.
            {"kind": "Tone", "f_start": 200, "f_end": 200,
             "volume_start": 150, "volume_end": 150, "total_duration": 25}.
            Empty means no vibration.
        seed (int): Seed for grain placement.
        grain_count (int): Number of grains; 0 uses the configured value.
        push_height (float): Push-down height in mm; 0 uses the configured
            value.
        trace_points (int): Approximate number of trace samples returned.

    Returns:
        str: JSON string with the structure:
        {
            "push_force": 35.2,
            "holding_force": 4.1,
            "interlock_force": null,
            "holding_detected": true,
            "zero_crossing_time": 14.02,
            "trace": {"t": [...], "f": [...], "phases": [...]}
        }
        On failure (including numerical blowups): {"error": "..."}
    """
    try:
        cycle = GripCycleConfig.from_config(config_loader)
        if push_height:
            cycle = cycle.with_overrides(push_height=float(push_height))
        waveform = (
            WaveformSpec.from_json(waveform_json)
            if waveform_json and waveform_json.strip()
            else None
        )
        world = _world(seed, grain_count, cycle.start_height)
        vacuum = PressureState.from_dict(config_loader.get_vacuum_config())
        trace = run_grip_cycle(
            world, cycle, waveform, vacuum, REFERENCE_DISPLACEMENT
        )
        metrics = extract_metrics(trace, **metrics_from_config(config_loader))
        result = metrics.to_dict()
        result["trace"] = _thin(trace, trace_points)
        logger.info(
            "Grip test seed %s: push %.3f N, hold %.3f N",
            seed,
            metrics.push_force,
            metrics.holding_force,
        )
        return json.dumps(result)
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error running grip test: %s", str(e))
        return json.dumps({"error": f"Error running grip test: {str(e)}"})


def run_relaxation_test(
    push_height: float = 40.0,
    vibrate: bool = True,
    seed: int = 0,
    grain_count: int = 0,
) -> str:
    """
    Run the stress-relaxation protocol at one push-down height.

    The gripper descends to the height without vacuum and holds; in the
    vibrated arm a 200 Hz tone is played during the hold. The residual
    push force before and after the hold shows how much the pack relaxed.

    Args:
        push_height (float): Push-down height in mm, between 27 and 70.
        vibrate (bool): Play the tone during the hold.
        seed (int): Seed for grain placement.
        grain_count (int): Number of grains; 0 uses the configured value.

    Returns:
        str: JSON string {"push_height": 40.0, "vibrated": true,
        "residual_before": 12.3, "residual_after": 4.1, "reduction": 8.2,
        "percent_reduction": 66.7} or {"error": "..."}
    """
    try:
        cycle = GripCycleConfig.from_config(config_loader)
        relax = RelaxationConfig.from_config(config_loader)
        world = _world(seed, grain_count, cycle.start_height)
        height = float(push_height)
        trace = relaxation_protocol(
            world, height, bool(vibrate), cycle, relax, REFERENCE_DISPLACEMENT
        )
        result = relaxation_residuals(
            trace, height, bool(vibrate), relax.residual_window
        )
        return json.dumps(
            {
                "push_height": result.push_height,
                "vibrated": result.vibrated,
                "residual_before": result.residual_before,
                "residual_after": result.residual_after,
                "reduction": result.reduction,
                "percent_reduction": result.percent_reduction,
            }
        )
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error running relaxation test: %s", str(e))
        return json.dumps(
            {"error": f"Error running relaxation test: {str(e)}"}
        )


def measure_contact_area(
    volume: float = 150.0, seed: int = 0, grain_count: int = 0
) -> str:
    """
    Grip up to the end of the dwell with a 200 Hz tone at `volume` percent
    and count the grains pressing the membrane onto the object.

    Args:
        volume (float): Exciter volume in percent (0-200).
        seed (int): Seed for grain placement.
        grain_count (int): Number of grains; 0 uses the configured value.

    Returns:
        str: JSON string {"volume": 150.0, "grains": 31,
        "membrane_length_mm": 28.4} or {"error": "..."}
    """
    try:
        cycle = GripCycleConfig.from_config(config_loader)
        tone = WaveformSpec.tone(200.0, float(volume))
        world = _world(seed, grain_count, cycle.start_height)
        vacuum = PressureState.from_dict(config_loader.get_vacuum_config())
        run_grip_cycle(
            world,
            cycle,
            tone,
            vacuum,
            REFERENCE_DISPLACEMENT,
            stop_after=Phase.DWELL,
        )
        area = object_contact_count(world)
        return json.dumps(
            {
                "volume": float(volume),
                "grains": area.grains,
                "membrane_length_mm": area.membrane_length,
            }
        )
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error measuring contact area: %s", str(e))
        return json.dumps({"error": f"Error measuring contact area: {str(e)}"})


def measure_stiffness(seed: int = 0, grain_count: int = 0) -> str:
    """
    Indentation stiffness of the hanging gripper with and without vacuum.

    Args:
        seed (int): Seed for grain placement.
        grain_count (int): Number of grains; 0 uses the configured value.

    Returns:
        str: JSON string {"stiffness_vented": 0.8, "stiffness_vacuum": 3.1,
        "ratio": 3.9} in N/mm, or {"error": "..."}
    """
    try:
        cycle = GripCycleConfig.from_config(config_loader)
        world = _world(seed, grain_count, cycle.start_height)
        vacuum = PressureState.from_dict(config_loader.get_vacuum_config())
        vented = indentation_stiffness(world, None)
        jammed = indentation_stiffness(world, vacuum)
        return json.dumps(
            {
                "stiffness_vented": vented,
                "stiffness_vacuum": jammed,
                "ratio": jammed / vented if vented > 0 else None,
            }
        )
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error measuring stiffness: %s", str(e))
        return json.dumps({"error": f"Error measuring stiffness: {str(e)}"})


grip_demo = gr.Interface(
    fn=run_grip_test,
    inputs=[
        gr.Textbox(
            label="Waveform JSON (empty for none)",
            value=WaveformSpec.tone(200.0, 150.0).to_json(),
            lines=3,
        ),
        gr.Number(label="Seed", value=0, precision=0),
        gr.Number(label="Grains (0 = config)", value=0, precision=0),
        gr.Number(label="Push height mm (0 = config)", value=0),
        gr.Number(label="Trace points", value=500, precision=0),
    ],
    outputs=gr.JSON(label="Grip test"),
    title="Grip Test",
    description="Simulate one full grip cycle and extract force metrics.",
)

relaxation_demo = gr.Interface(
    fn=run_relaxation_test,
    inputs=[
        gr.Number(label="Push height (mm)", value=40.0),
        gr.Checkbox(label="Vibrate", value=True),
        gr.Number(label="Seed", value=0, precision=0),
        gr.Number(label="Grains (0 = config)", value=0, precision=0),
    ],
    outputs=gr.JSON(label="Relaxation"),
    title="Stress Relaxation",
    description="Residual push force before and after a held vibration.",
)

contact_demo = gr.Interface(
    fn=measure_contact_area,
    inputs=[
        gr.Number(label="Volume (%)", value=150.0),
        gr.Number(label="Seed", value=0, precision=0),
        gr.Number(label="Grains (0 = config)", value=0, precision=0),
    ],
    outputs=gr.JSON(label="Contact area"),
    title="Contact Area",
    description="Grain-object contacts at the end of the dwell.",
)

stiffness_demo = gr.Interface(
    fn=measure_stiffness,
    inputs=[
        gr.Number(label="Seed", value=0, precision=0),
        gr.Number(label="Grains (0 = config)", value=0, precision=0),
    ],
    outputs=gr.JSON(label="Stiffness"),
    title="Jamming Stiffness",
    description="Probe indentation stiffness with and without vacuum.",
)

demo = gr.TabbedInterface(
    [grip_demo, relaxation_demo, contact_demo, stiffness_demo],
    ["Grip Test", "Relaxation", "Contact Area", "Stiffness"],
    title="MCP Server - Jamming Gripper Rig",
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
