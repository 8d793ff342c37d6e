import { execFile } from "node:child_process";
import { promises as fs } from "node:fs";
import os from "node:os";
import path from "node:path";
import { fileURLToPath } from "node:url";
import { promisify } from "node:util";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import { batchOcr, ocrReference, readManifest } from "../src/batch.js";
import {
  CommandEngine,
  EngineError,
  SidecarEngine,
  makeEngine,
  parseEngineOutput,
} from "../src/engines.js";

const run = promisify(execFile);
const HERE = path.dirname(fileURLToPath(import.meta.url));
const CLI = path.join(HERE, "..", "dist", "cli.js");

let workRoot: string;

beforeAll(async () => {
  workRoot = await fs.mkdtemp(path.join(os.tmpdir(), "docforge-ocr-"));
});

afterAll(async () => {
  await fs.rm(workRoot, { recursive: true, force: true });
});

async function makeFixture(dir: string, count: number) {
  // Minimal manifest + image + sidecar trio per sample.
  await fs.mkdir(path.join(dir, "images"), { recursive: true });
  const lines: string[] = [];
  for (let i = 0; i < count; i++) {
    const id = `fix-${i}`;
    const ref = path.join("images", `${id}.png`);
    await fs.writeFile(path.join(dir, ref), Buffer.from([0x89, 0x50, 0x4e, 0x47]));
    await fs.writeFile(path.join(dir, `${ref}.txt`), `words for sample ${i}\nsecond line ${i}\n`);
    lines.push(JSON.stringify({ sample_id: id, image_ref: ref, annotation: `words ${i}` }));
  }
  const manifest = path.join(dir, "corpus.jsonl");
  await fs.writeFile(manifest, lines.join("\n") + "\n");
  return manifest;
}

describe("engine output parsing", () => {
  it("joins plain lines with single spaces", () => {
    expect(parseEngineOutput("one  two\nthree\n\n")).toBe("one two three");
  });

  it("unwraps a text object", () => {
    expect(parseEngineOutput('{"text": "hello\\nworld"}')).toBe("hello world");
  });

  it("joins region arrays in order", () => {
    expect(parseEngineOutput('[{"text": "a"}, {"text": "b"}, "c"]')).toBe("a b c");
  });

  it("treats non-JSON braces as text", () => {
    expect(parseEngineOutput("{not json")).toBe("{not json");
  });
});

describe("engines", () => {
  it("sidecar reads the adjacent text file", async () => {
    const dir = path.join(workRoot, "sidecar");
    await fs.mkdir(dir, { recursive: true });
    const image = path.join(dir, "page.png");
    await fs.writeFile(image, "png");
    await fs.writeFile(`${image}.txt`, "alpha\nbeta\n");
    const engine = new SidecarEngine();
    expect(await engine.recognize(image)).toBe("alpha beta");
  });

  it("sidecar errors when the text file is missing", async () => {
    const engine = new SidecarEngine();
    await expect(engine.recognize(path.join(workRoot, "nope.png"))).rejects.toThrow(EngineError);
  });

  it("command engine substitutes {input} and parses stdout", async () => {
    const engine = new CommandEngine(
      "echo-json",
      `node -e console.log(JSON.stringify({text:process.argv[1]})) {input}`,
      "test",
    );
    expect(await engine.recognize("IMG.png")).toBe("IMG.png");
  });

  it("command engine surfaces non-zero exits", async () => {
    const engine = new CommandEngine("boom", "node -e process.exit(3) {input}");
    await expect(engine.recognize("x.png")).rejects.toThrow(EngineError);
  });

  it("makeEngine rejects unknown engines without a template", () => {
    expect(() => makeEngine("myocr")).toThrow(/unknown engine/);
    expect(makeEngine("myocr", { cmd: "myocr-cli {input}" }).name).toBe("myocr");
  });
});

describe("batch over a manifest", () => {
  it("writes one schema-valid record per image", async () => {
    const dir = path.join(workRoot, "batch");
    const manifest = await makeFixture(dir, 5);
    const out = path.join(dir, "refs.jsonl");
    const result = await batchOcr(manifest, out, new SidecarEngine(), { log: () => {} });
    expect(result).toMatchObject({ written: 5, skipped: 0, failed: 0 });

    const lines = (await fs.readFile(out, "utf-8")).trim().split("\n");
    expect(lines).toHaveLength(5);
    for (const line of lines) {
      const record = JSON.parse(line);
      expect(typeof record.sample_id).toBe("string");
      expect(typeof record.reference_text).toBe("string");
      expect(record.reference_text.length).toBeGreaterThan(0);
      expect(record.engine).toBe("sidecar");
      expect(record.engine_version).toBe("1");
    }
  });

  it("re-run is idempotent", async () => {
    const dir = path.join(workRoot, "idempotent");
    const manifest = await makeFixture(dir, 3);
    const out = path.join(dir, "refs.jsonl");
    await batchOcr(manifest, out, new SidecarEngine(), { log: () => {} });
    const again = await batchOcr(manifest, out, new SidecarEngine(), { log: () => {} });
    expect(again).toMatchObject({ written: 0, skipped: 3, failed: 0 });
    const lines = (await fs.readFile(out, "utf-8")).trim().split("\n");
    expect(lines).toHaveLength(3);
  });

  it("continues past broken images and reports them", async () => {
    const dir = path.join(workRoot, "partial");
    const manifest = await makeFixture(dir, 5);
    await fs.rm(path.join(dir, "images", "fix-2.png"));
    const out = path.join(dir, "refs.jsonl");
    const result = await batchOcr(manifest, out, new SidecarEngine(), { log: () => {} });
    expect(result).toMatchObject({ written: 4, failed: 1 });
    expect(result.failures[0].sampleId).toBe("fix-2");
  });

  it("rejects malformed manifests", async () => {
    const dir = path.join(workRoot, "badmanifest");
    await fs.mkdir(dir, { recursive: true });
    const manifest = path.join(dir, "corpus.jsonl");
    await fs.writeFile(manifest, "not json\n");
    await expect(readManifest(manifest)).rejects.toThrow(/invalid JSON/);
  });

  it("ocrReference rejects unreadable images", async () => {
    await expect(
      ocrReference("x", path.join(workRoot, "ghost.png"), new SidecarEngine()),
    ).rejects.toThrow(/not readable/);
  });
});

describe("cli", () => {
  it("exits 0 on success and 4 on partial failure", async () => {
    const dir = path.join(workRoot, "cli");
    const manifest = await makeFixture(dir, 3);
    const out = path.join(dir, "refs.jsonl");
    const ok = await run("node", [CLI, "--manifest", manifest, "--out", out, "--engine", "sidecar"]);
    expect(ok.stdout).toContain("wrote 3 reference records");

    await fs.rm(path.join(dir, "images", "fix-1.png"));
    await fs.rm(out);
    const partial = await run("node", [CLI, "--manifest", manifest, "--out", out, "--engine", "sidecar"]).then(
      () => {
        throw new Error("expected exit 4");
      },
      (err) => err as { code: number; stdout: string },
    );
    expect(partial.code).toBe(4);
    expect(partial.stdout).toContain("wrote 2 reference records");
  });

  it("exits 2 without required flags", async () => {
    const failure = await run("node", [CLI]).then(
      () => {
        throw new Error("expected exit 2");
      },
      (err) => err as { code: number },
    );
    expect(failure.code).toBe(2);
  });
});

describe("acceptance: renders from known annotations feed docforge filter", () => {
  it("5 records pass through the pipeline with F1 >= 0.9", async () => {
    const dir = path.join(workRoot, "acceptance");
    const genDir = path.join(dir, "gen");

    // Fixture images come from the pipeline's own generator (stub renderer):
    // five pages rendered from known annotations.
    await run("python3", [
      "-m", "docforge", "gen",
      "--category", "plain",
      "--count", "5",
      "--seed", "9",
      "--out", genDir,
    ]);
    const manifest = path.join(genDir, "corpus.jsonl");
    const corpusLines = (await fs.readFile(manifest, "utf-8")).trim().split("\n");
    expect(corpusLines).toHaveLength(5);

    // Stand-in OCR: the render's source text sits beside each image.
    for (const line of corpusLines) {
      const record = JSON.parse(line);
      await fs.writeFile(path.join(genDir, `${record.image_ref}.txt`), record.annotation + "\n");
    }

    const refs = path.join(dir, "references.jsonl");
    const cli = await run("node", [CLI, "--manifest", manifest, "--out", refs, "--engine", "sidecar"]);
    expect(cli.stdout).toContain("wrote 5 reference records");

    const refLines = (await fs.readFile(refs, "utf-8")).trim().split("\n");
    expect(refLines).toHaveLength(5);
    for (const line of refLines) {
      const record = JSON.parse(line);
      expect(Object.keys(record).sort()).toEqual([
        "engine",
        "engine_version",
        "reference_text",
        "sample_id",
      ]);
    }

    // Consumed by the pipeline without transformation.
    const filteredDir = path.join(dir, "filtered");
    await run("python3", [
      "-m", "docforge", "filter",
      "--predictions", manifest,
      "--references", refs,
      "--out", filteredDir,
    ]);
    const report = JSON.parse(await fs.readFile(path.join(filteredDir, "report.json"), "utf-8"));
    expect(report.aggregate.input_count).toBe(5);
    expect(report.aggregate.retained_total).toBe(5);
    for (const decision of report.decisions) {
      expect(decision.verdict).toBe("Retain");
      expect(decision.f1).toBeGreaterThanOrEqual(0.9);
    }
  }, 120000);
});
