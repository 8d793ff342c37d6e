import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from docforge.docmodel import Category, ElementKind, parse_annotation
from docforge.mathcheck import extract_formulas, formula_valid
from docforge.synthgen import (
    COLUMN_SEPARATOR,
    AuthenticationError,
    FlakyEndpoint,
    GenerationRun,
    GenSpec,
    HttpEndpoint,
    LayoutError,
    RendererCommand,
    RenderError,
    ResponseTooLargeError,
    StubEndpoint,
    TransientEndpointError,
    build_prompt,
    build_specs,
    compose_layout,
    inject_table,
    load_table_pool,
    load_topics,
    render_document,
    request_generation,
)
from docforge.tablecheck import check_table, extract_tables

from conftest import VALID_TABLE


class TestPrompts:
    def test_plain_substitution(self):
        spec = GenSpec(Category.PLAIN_ONLY, topic="volcanoes", seed=7)
        prompt = build_prompt(spec)
        assert '"volcanoes"' in prompt.text
        assert "Random seed is 7" in prompt.text
        assert "TOPIC" not in prompt.text

    def test_deterministic(self):
        spec = GenSpec(Category.WITH_FORMULA, topic="tides", seed=3)
        assert build_prompt(spec).text == build_prompt(spec).text

    def test_table_required(self):
        spec = GenSpec(Category.WITH_TABLE, topic="rain", seed=1)
        with pytest.raises(ValueError, match="table_html"):
            build_prompt(spec)
        prompt = build_prompt(spec, table_html=VALID_TABLE)
        assert VALID_TABLE in prompt.text

    def test_table_rejected_elsewhere(self):
        spec = GenSpec(Category.PLAIN_ONLY, topic="rain", seed=1)
        with pytest.raises(ValueError):
            build_prompt(spec, table_html=VALID_TABLE)

    def test_multicolumn_mentions_separator(self):
        spec = GenSpec(Category.MULTI_COLUMN, topic="maps", seed=2, columns=2)
        assert COLUMN_SEPARATOR in build_prompt(spec).text

    def test_column_invariants(self):
        with pytest.raises(ValueError):
            GenSpec(Category.PLAIN_ONLY, topic="x", seed=0, columns=2)
        with pytest.raises(ValueError):
            GenSpec(Category.MULTI_COLUMN, topic="x", seed=0, columns=1)


class TestEndpoint:
    def test_stub_deterministic(self):
        spec = GenSpec(Category.WITH_FORMULA, topic="optics", seed=11)
        prompt = build_prompt(spec)
        assert StubEndpoint().generate(prompt) == StubEndpoint().generate(prompt)

    def test_stub_formula_category_has_valid_formulas(self):
        for seed in range(8):
            prompt = build_prompt(GenSpec(Category.WITH_FORMULA, topic="optics", seed=seed))
            text = StubEndpoint().generate(prompt)
            formulas = extract_formulas(parse_annotation(text))
            assert formulas
            for f in formulas:
                assert formula_valid(f.source, f.mode).valid

    def test_stub_multicolumn_has_separator(self):
        prompt = build_prompt(GenSpec(Category.MULTI_COLUMN, topic="maps", seed=4, columns=2))
        assert COLUMN_SEPARATOR in StubEndpoint().generate(prompt)

    def test_retry_then_success(self):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=0))
        flaky = FlakyEndpoint(inner=StubEndpoint(), failures=2)
        text = request_generation(flaky, prompt, max_retries=3, backoff_s=0)
        assert text
        assert flaky.attempts == 3

    def test_retries_exhausted(self):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=0))
        flaky = FlakyEndpoint(inner=StubEndpoint(), failures=10)
        with pytest.raises(TransientEndpointError):
            request_generation(flaky, prompt, max_retries=2, backoff_s=0)
        assert flaky.attempts == 3


class _FakeModelHandler(BaseHTTPRequestHandler):
    """Scripted generation server: behavior keyed by the request's model."""

    calls = 0

    def do_POST(self):
        _FakeModelHandler.calls += 1
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        assert set(body) == {"model", "prompt", "max_tokens", "temperature"}
        model = body["model"]
        if model == "denied":
            self.send_response(401)
            self.end_headers()
            return
        if model == "flaky" and _FakeModelHandler.calls % 2 == 1:
            self.send_response(503)
            self.end_headers()
            return
        if model == "huge":
            payload = {"text": "x" * 4096}
        else:
            payload = {"text": f"echo of {len(body['prompt'])} prompt chars"}
        data = json.dumps(payload).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture()
def fake_server():
    server = ThreadingHTTPServer(("127.0.0.1", 0), _FakeModelHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    _FakeModelHandler.calls = 0
    yield f"http://127.0.0.1:{server.server_port}/generate"
    server.shutdown()


class TestHttpEndpoint:
    def test_wire_contract(self, fake_server):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=1))
        endpoint = HttpEndpoint(url=fake_server, model="plain")
        text = endpoint.generate(prompt)
        assert text == f"echo of {len(prompt.text)} prompt chars"

    def test_auth_failure_not_retried(self, fake_server):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=1))
        endpoint = HttpEndpoint(url=fake_server, model="denied")
        with pytest.raises(AuthenticationError):
            request_generation(endpoint, prompt, max_retries=3, backoff_s=0)
        assert _FakeModelHandler.calls == 1

    def test_server_error_retried(self, fake_server):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=1))
        endpoint = HttpEndpoint(url=fake_server, model="flaky")
        text = request_generation(endpoint, prompt, max_retries=2, backoff_s=0)
        assert "echo of" in text
        assert _FakeModelHandler.calls == 2

    def test_size_cap(self, fake_server):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=1))
        endpoint = HttpEndpoint(url=fake_server, model="huge", max_response_bytes=1024)
        with pytest.raises(ResponseTooLargeError):
            endpoint.generate(prompt)

    def test_connection_refused_is_transient(self):
        prompt = build_prompt(GenSpec(Category.PLAIN_ONLY, topic="x", seed=1))
        endpoint = HttpEndpoint(url="http://127.0.0.1:9", model="m", timeout_s=0.5)
        with pytest.raises(TransientEndpointError):
            endpoint.generate(prompt)


FIVE_PARAGRAPHS = "p one\n\np two\n\np three\n\np four\n\np five"


class TestInjectTable:
    def test_deterministic(self):
        assert inject_table(FIVE_PARAGRAPHS, VALID_TABLE, 9) == inject_table(
            FIVE_PARAGRAPHS, VALID_TABLE, 9
        )

    def test_empty_text(self):
        assert inject_table("", VALID_TABLE, 1) == VALID_TABLE

    def test_single_block_goes_to_end(self):
        out = inject_table("only one paragraph", VALID_TABLE, 5)
        assert out == f"only one paragraph\n\n{VALID_TABLE}"

    def test_all_positions_reachable(self):
        positions = set()
        for seed in range(1000):
            out = inject_table(FIVE_PARAGRAPHS, VALID_TABLE, seed)
            doc = parse_annotation(out)
            table_span = doc.spans_of(ElementKind.TABLE)[0]
            before = out[: table_span.start].count("\n\n")
            positions.add(before)
        assert positions == {0, 1, 2, 3, 4, 5}

    def test_text_content_preserved(self):
        out = inject_table(FIVE_PARAGRAPHS, VALID_TABLE, 3)
        for word in ("one", "two", "three", "four", "five"):
            assert word in out
        assert VALID_TABLE in out

    def test_never_splits_display_formula(self):
        text = "intro\n\n$$\na = 1\n\n b = 2\n$$\n\noutro"
        for seed in range(50):
            out = inject_table(text, VALID_TABLE, seed)
            doc = parse_annotation(out)
            display = doc.spans_of(ElementKind.DISPLAY_FORMULA)
            assert len(display) == 1
            assert display[0].source == "$$\na = 1\n\n b = 2\n$$"


class TestComposeLayout:
    def test_single_column(self):
        page = compose_layout("# Title\n\nBody text here.", columns=1)
        assert page.columns == 1
        assert "<h1>Title</h1>" in page.html
        assert "columns" not in page.annotation
        assert page.annotation == "# Title\n\nBody text here."

    def test_tables_verbatim_formulas_delimited(self):
        annotation = f"before\n\n{VALID_TABLE}\n\nafter $x^2$ end"
        page = compose_layout(annotation, columns=1)
        assert VALID_TABLE in page.html
        assert "$x^2$" in page.html

    def test_two_columns_split_at_marker(self):
        annotation = f"left part\n\nmore left\n\n{COLUMN_SEPARATOR}\n\nright part"
        page = compose_layout(annotation, columns=2)
        assert page.html.count('<div class="column">') == 2
        assert COLUMN_SEPARATOR not in page.annotation
        assert page.annotation == "left part\n\nmore left\n\nright part"

    def test_three_columns(self):
        annotation = (
            f"a one\n\na two\n\n{COLUMN_SEPARATOR}\n\nb one\n\nb two\n\n"
            f"{COLUMN_SEPARATOR}\n\nc one"
        )
        page = compose_layout(annotation, columns=3)
        assert page.html.count('<div class="column">') == 3
        assert page.annotation.index("a one") < page.annotation.index("b one") < page.annotation.index("c one")

    def test_three_columns_from_one_marker(self):
        annotation = f"a\n\nb\n\nc\n\nd\n\n{COLUMN_SEPARATOR}\n\ne\n\nf"
        page = compose_layout(annotation, columns=3)
        assert page.html.count('<div class="column">') == 3

    def test_missing_separator(self):
        with pytest.raises(LayoutError, match="separator"):
            compose_layout("no marker here", columns=2)

    def test_markdown_conversion(self):
        page = compose_layout("## Head\n\n- item one\n- item two\n\n1. first\n2. second\n\n**bold** *it*", 1)
        assert "<h2>Head</h2>" in page.html
        assert page.html.count("<li>") == 4
        assert "<b>bold</b>" in page.html and "<i>it</i>" in page.html

    def test_html_escaped_in_plain_text(self):
        page = compose_layout("a < b & c > d", 1)
        assert "a &lt; b &amp; c &gt; d" in page.html


class TestRender:
    def test_stub_render(self, tmp_path):
        page = compose_layout("hello", 1)
        sample = render_document(page, RendererCommand.stub(), tmp_path / "out.png")
        assert sample.width_px == 1240
        assert sample.height_px == 1754
        assert sample.annotation == "hello"
        assert (tmp_path / "out.png").stat().st_size > 0

    def test_renderer_failure(self, tmp_path):
        page = compose_layout("hello", 1)
        bad = RendererCommand(template='python3 -c "import sys; sys.exit(3)" {input} {output}')
        with pytest.raises(RenderError, match="exited 3"):
            render_document(page, bad, tmp_path / "out.png")

    def test_renderer_empty_output(self, tmp_path):
        page = compose_layout("hello", 1)
        noop = RendererCommand(template='python3 -c "pass" {input} {output}')
        with pytest.raises(RenderError, match="no image"):
            render_document(page, noop, tmp_path / "out.png")

    def test_template_needs_placeholders(self, tmp_path):
        page = compose_layout("hello", 1)
        with pytest.raises(RenderError, match="needs"):
            render_document(page, RendererCommand(template="true"), tmp_path / "out.png")


class TestGenerationRun:
    def run_small(self, tmp_path, name, endpoint=None, count=2):
        topics = load_topics()
        run = GenerationRun(
            endpoint=endpoint or StubEndpoint(),
            renderer=RendererCommand.stub(),
            out_dir=tmp_path / name,
            topics=topics,
        )
        specs = build_specs(
            [Category.PLAIN_ONLY, Category.WITH_FORMULA, Category.WITH_TABLE, Category.MULTI_COLUMN],
            count,
            base_seed=5,
            topics=topics,
        )
        return run.run(specs), tmp_path / name

    def test_batch_ground_truth_fidelity(self, tmp_path):
        report, out_dir = self.run_small(tmp_path, "batch")
        assert report.written == 8
        assert report.failures == []
        lines = (out_dir / "corpus.jsonl").read_text("utf-8").splitlines()
        assert len(lines) == 8
        for line in lines:
            obj = json.loads(line)
            doc = parse_annotation(obj["annotation"])
            assert doc.source_text == obj["annotation"]
            for table in extract_tables(doc):
                assert check_table(table).valid
            for formula in extract_formulas(doc):
                assert formula_valid(formula.source, formula.mode).valid
            assert obj["provenance"] == "Synthetic"
            assert obj["width_px"] == 1240
            image = out_dir / obj["image_ref"]
            assert image.exists() and image.stat().st_size > 0

    def test_with_table_samples_contain_pool_table(self, tmp_path):
        report, out_dir = self.run_small(tmp_path, "tables")
        pool = load_table_pool()
        for line in (out_dir / "corpus.jsonl").read_text("utf-8").splitlines():
            obj = json.loads(line)
            if obj["category"] == "WithTable":
                tables = extract_tables(parse_annotation(obj["annotation"]))
                assert len(tables) == 1
                assert tables[0] in pool

    def test_reproducible_bytes(self, tmp_path):
        _, dir_a = self.run_small(tmp_path, "a")
        _, dir_b = self.run_small(tmp_path, "b")
        assert (dir_a / "corpus.jsonl").read_bytes() == (dir_b / "corpus.jsonl").read_bytes()
        assert (dir_a / "provenance.jsonl").read_bytes() == (dir_b / "provenance.jsonl").read_bytes()

    def test_failures_reported_not_dropped(self, tmp_path):
        flaky = FlakyEndpoint(inner=StubEndpoint(), failures=10**9)
        run = GenerationRun(
            endpoint=flaky,
            renderer=RendererCommand.stub(),
            out_dir=tmp_path / "fail",
            max_retries=1,
            backoff_s=0,
        )
        specs = build_specs([Category.PLAIN_ONLY], 3, base_seed=0, topics=["x"])
        report = run.run(specs)
        assert report.written == 0
        assert len(report.failures) == 3
        assert all(f.stage == "generate" for f in report.failures)
        assert sum(report.requested.values()) == report.written + len(report.failures)

    def test_parallel_matches_serial(self, tmp_path):
        _, serial_dir = self.run_small(tmp_path, "serial")
        topics = load_topics()
        run = GenerationRun(
            endpoint=StubEndpoint(),
            renderer=RendererCommand.stub(),
            out_dir=tmp_path / "parallel",
            topics=topics,
            parallelism=4,
        )
        specs = build_specs(
            [Category.PLAIN_ONLY, Category.WITH_FORMULA, Category.WITH_TABLE, Category.MULTI_COLUMN],
            2,
            base_seed=5,
            topics=topics,
        )
        run.run(specs)
        assert (tmp_path / "parallel" / "corpus.jsonl").read_bytes() == (
            serial_dir / "corpus.jsonl"
        ).read_bytes()
