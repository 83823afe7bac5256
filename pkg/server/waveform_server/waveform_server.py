"""MCP Waveform Server exposing excitation waveform synthesis via a Gradio interface."""

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
import numpy as np  # noqa: E402

from config_loader import get_config_loader, setup_logging  # noqa: E402
from jamgrip.errors import JamGripError  # noqa: E402
from jamgrip.waveform import (  # noqa: E402
    WaveformSpec,
    instantaneous_frequency,
    rms,
    sample,
    synthesize,
)

# Load configuration
config_loader = get_config_loader()
server_config = config_loader.get_server_config("waveform")
waveform_config = config_loader.get_waveform_config()

setup_logging()
logger = logging.getLogger(__name__)

REFERENCE_DISPLACEMENT = float(waveform_config["reference_displacement"])
DEFAULT_SAMPLE_RATE = float(waveform_config["sample_rate"])


def synthesize_waveform(
    spec_json: str, sample_rate: float = DEFAULT_SAMPLE_RATE, max_samples: int = 2000
) -> str:
    """
    Synthesize an exciter displacement waveform from a JSON description.

    The waveform is one of the rig's excitation kinds: a constant Tone, a
    linear frequency Sweep, a PulseTrain of short repeated chirps, a
    VolumeSweep (amplitude ramp at fixed frequency) or a VolumePulseTrain.
    Volume is the rig's percent control (0-200 %) and maps linearly to
    plate displacement using the configured reference displacement at 100 %.

    Args:
        spec_json (str): JSON object with the waveform fields, for example
            {"kind": "Sweep", "f_start": 100, "f_end": 800,
             "volume_start": 150, "volume_end": 150, "total_duration": 25}
            Pulse trains also need "segment_duration" (seconds) and a
            total_duration that is a whole number of segments.
        sample_rate (float): Samples per second. Must be at least four
            times the highest frequency in the waveform.
        max_samples (int): Number of leading samples returned in the
            response. The statistics always cover the full buffer.

    Returns:
        str: JSON string with the structure:
        {
            "label": "100-800Hz",
            "sample_rate": 8000.0,
            "sample_count": 200000,
            "duration": 25.0,
            "rms_mm": 0.53,
            "peak_mm": 0.75,
            "samples": [0.0, 0.0294, ...]
        }
        On failure: {"error": "..."}
    """
    try:
        spec = WaveformSpec.from_json(spec_json)
        buffer = synthesize(spec, float(sample_rate), REFERENCE_DISPLACEMENT)
        count = max(0, int(max_samples))
        result = {
            "label": spec.label(),
            "sample_rate": buffer.sample_rate,
            "sample_count": len(buffer),
            "duration": spec.total_duration,
            "rms_mm": rms(buffer),
            "peak_mm": float(np.abs(buffer.samples).max()),
            "samples": [round(v, 6) for v in buffer.samples[:count].tolist()],
        }
        logger.info(
            "Synthesized %s: %d samples at %.0f Hz",
            spec.label(),
            len(buffer),
            buffer.sample_rate,
        )
        return json.dumps(result)
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error synthesizing waveform: %s", str(e))
        return json.dumps({"error": f"Error synthesizing waveform: {str(e)}"})


def sample_waveform(spec_json: str, t: float) -> str:
    """
    Evaluate a waveform at a single instant.

    Args:
        spec_json (str): JSON waveform description (see synthesize_waveform)
        t (float): Time in seconds within [0, total_duration]

    Returns:
        str: JSON string {"t": 1.5, "displacement_mm": 0.12,
        "frequency_hz": 142.0} or {"error": "..."}
    """
    try:
        spec = WaveformSpec.from_json(spec_json)
        t = float(t)
        return json.dumps(
            {
                "t": t,
                "displacement_mm": sample(spec, t, REFERENCE_DISPLACEMENT),
                "frequency_hz": instantaneous_frequency(spec, t),
            }
        )
    except (JamGripError, ValueError, KeyError, TypeError) as e:
        logger.error("Error sampling waveform: %s", str(e))
        return json.dumps({"error": f"Error sampling waveform: {str(e)}"})


EXAMPLE_SPEC = WaveformSpec.sweep(100.0, 800.0).to_json()

synthesize_demo = gr.Interface(
    fn=synthesize_waveform,
    inputs=[
        gr.Textbox(label="Waveform JSON", value=EXAMPLE_SPEC, lines=4),
        gr.Number(label="Sample rate (Hz)", value=DEFAULT_SAMPLE_RATE),
        gr.Number(label="Samples returned", value=2000, precision=0),
    ],
    outputs=gr.JSON(label="Waveform"),
    title="Waveform Synthesis",
    description="Render tones, sweeps and pulse trains to exciter displacement.",
)

sample_demo = gr.Interface(
    fn=sample_waveform,
    inputs=[
        gr.Textbox(label="Waveform JSON", value=EXAMPLE_SPEC, lines=4),
        gr.Number(label="Time (s)", value=1.0),
    ],
    outputs=gr.JSON(label="Sample"),
    title="Waveform Sample",
    description="Displacement and instantaneous frequency at one instant.",
)

demo = gr.TabbedInterface(
    [synthesize_demo, sample_demo],
    ["Synthesize", "Sample"],
    title="MCP Server - Exciter Waveforms",
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
