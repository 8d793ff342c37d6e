"""External page rendering.

The renderer is an external command (typically a headless browser screenshot
invocation) configured as a template with {input} and {output} placeholders.
Contract: exit 0 and a non-empty image file at {output}. A bundled stub
renderer writes a blank A4-proportioned PNG for tests and desk runs.
"""

from __future__ import annotations

import shlex
import subprocess
import sys
import tempfile
from dataclasses import dataclass
from pathlib import Path

from .layout import HtmlDocument

DEFAULT_TIMEOUT_S = 30.0

STUB_RENDERER = "stub"


class RenderError(RuntimeError):
    pass


@dataclass(frozen=True)
class RendererCommand:
    """Command template with {input}/{output} placeholders, e.g.
    ``chromium --headless --screenshot={output} --window-size=1240,1754 {input}``.
    """

    template: str
    timeout_s: float = DEFAULT_TIMEOUT_S

    @classmethod
    def stub(cls) -> "RendererCommand":
        return cls(template=f'"{sys.executable}" -m docforge.synthgen.stub_render {{input}} {{output}}')

    @classmethod
    def from_config(cls, value: str, timeout_s: float = DEFAULT_TIMEOUT_S) -> "RendererCommand":
        if value == STUB_RENDERER:
            return cls.stub()
        return cls(template=value, timeout_s=timeout_s)

    def argv(self, input_path: Path, output_path: Path) -> list[str]:
        args = shlex.split(self.template)
        if not any("{input}" in a for a in args) or not any("{output}" in a for a in args):
            raise RenderError("renderer command template needs {input} and {output}")
        return [a.replace("{input}", str(input_path)).replace("{output}", str(output_path)) for a in args]


@dataclass(frozen=True)
class RenderedSample:
    html: str
    image_path: Path
    width_px: int
    height_px: int
    annotation: str


def render_document(doc: HtmlDocument, renderer: RendererCommand, image_path: Path | str) -> RenderedSample:
    """Render a composed page to an image file and read back its dimensions."""
    image_path = Path(image_path)
    image_path.parent.mkdir(parents=True, exist_ok=True)
    with tempfile.NamedTemporaryFile("w", suffix=".html", encoding="utf-8", delete=False) as fh:
        fh.write(doc.html)
        html_path = Path(fh.name)
    try:
        argv = renderer.argv(html_path, image_path)
        try:
            proc = subprocess.run(
                argv,
                timeout=renderer.timeout_s,
                capture_output=True,
                text=True,
            )
        except subprocess.TimeoutExpired as exc:
            raise RenderError(f"renderer timed out after {renderer.timeout_s}s") from exc
        if proc.returncode != 0:
            raise RenderError(f"renderer exited {proc.returncode}: {proc.stderr.strip()[:300]}")
        if not image_path.exists() or image_path.stat().st_size == 0:
            raise RenderError(f"renderer produced no image at {image_path}")
        from PIL import Image  # deferred: stub subprocesses skip the import cost

        with Image.open(image_path) as img:
            width, height = img.size
    finally:
        html_path.unlink(missing_ok=True)
    return RenderedSample(
        html=doc.html,
        image_path=image_path,
        width_px=width,
        height_px=height,
        annotation=doc.annotation,
    )
