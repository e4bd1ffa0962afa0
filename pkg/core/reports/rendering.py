"""
Report rendering: text and DOT through Django templates, JSON through a
numpy-aware DjangoJSONEncoder.
"""

import json
import logging
from dataclasses import asdict, is_dataclass
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from django.core.serializers.json import DjangoJSONEncoder
from django.template.loader import render_to_string

logger = logging.getLogger(__name__)

TEMPLATE_DIR = 'core/reports'


class ReportJSONEncoder(DjangoJSONEncoder):
    def default(self, o):
        if isinstance(o, np.ndarray):
            return o.tolist()
        if isinstance(o, np.bool_):
            return bool(o)
        if isinstance(o, np.integer):
            return int(o)
        if isinstance(o, np.floating):
            return float(o)
        if isinstance(o, Enum):
            return o.value
        if is_dataclass(o) and not isinstance(o, type):
            return asdict(o)
        if isinstance(o, (set, frozenset)):
            return sorted(o)
        if isinstance(o, Path):
            return str(o)
        return super().default(o)


def render_text(template: str, context: dict) -> str:
    """Render a plain-text template; ``template`` may omit the report directory."""
    if '/' not in template:
        template = f"{TEMPLATE_DIR}/{template}"
    return render_to_string(template, context)


def render_json(payload) -> str:
    return json.dumps(payload, cls=ReportJSONEncoder, indent=2, sort_keys=True)


def render_report(template: str, context: dict, payload, fmt: str = 'text') -> str:
    if fmt == 'json':
        return render_json(payload)
    if fmt == 'text':
        return render_text(template, context)
    raise ValueError(f"Unknown report format '{fmt}', expected 'text' or 'json'")


def write_report(content: str, out_dir: Optional[Path], filename: str) -> Optional[Path]:
    """Write ``content`` to ``out_dir/filename``; no-op without an output directory."""
    if out_dir is None:
        return None
    path = Path(out_dir) / filename
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content)
    logger.info("Wrote report %s", path)
    return path
