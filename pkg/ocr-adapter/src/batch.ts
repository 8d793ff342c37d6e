// Batch OCR over a docforge sample manifest.
//
// Output is append-only JSONL, one ReferenceRecord per successfully
// processed image; a re-run skips sample_ids already present, so interrupted
// batches can simply be restarted. Failures are logged and counted, never
// fatal for the rest of the batch.

import { promises as fs } from "node:fs";
import path from "node:path";

import { EngineError, OcrEngine } from "./engines.js";
import { BatchResult, ManifestEntry, ReferenceRecord } from "./types.js";

export async function ocrReference(
  sampleId: string,
  imagePath: string,
  engine: OcrEngine,
): Promise<ReferenceRecord> {
  await fs.access(imagePath).catch(() => {
    throw new EngineError(`image not readable: ${imagePath}`);
  });
  const text = await engine.recognize(imagePath);
  return {
    sample_id: sampleId,
    reference_text: text,
    engine: engine.name,
    engine_version: engine.version,
  };
}

export async function readManifest(manifestPath: string): Promise<ManifestEntry[]> {
  const baseDir = path.dirname(path.resolve(manifestPath));
  const raw = await fs.readFile(manifestPath, "utf-8");
  const entries: ManifestEntry[] = [];
  raw.split(/\r?\n/).forEach((line, index) => {
    if (!line.trim()) return;
    let parsed: { sample_id?: unknown; image_ref?: unknown };
    try {
      parsed = JSON.parse(line);
    } catch (err) {
      throw new Error(`${manifestPath}:${index + 1}: invalid JSON: ${(err as Error).message}`);
    }
    if (typeof parsed.sample_id !== "string" || !parsed.sample_id) {
      throw new Error(`${manifestPath}:${index + 1}: missing sample_id`);
    }
    const imageRef = typeof parsed.image_ref === "string" ? parsed.image_ref : "";
    entries.push({
      sampleId: parsed.sample_id,
      imagePath: path.isAbsolute(imageRef) ? imageRef : path.join(baseDir, imageRef),
    });
  });
  return entries;
}

async function existingIds(outPath: string): Promise<Set<string>> {
  const ids = new Set<string>();
  let raw: string;
  try {
    raw = await fs.readFile(outPath, "utf-8");
  } catch {
    return ids;
  }
  for (const line of raw.split(/\r?\n/)) {
    if (!line.trim()) continue;
    try {
      const parsed = JSON.parse(line);
      if (typeof parsed.sample_id === "string") ids.add(parsed.sample_id);
    } catch {
      // Ignore trailing garbage from a previous crash; those ids re-run.
    }
  }
  return ids;
}

async function mapPool<T, R>(
  items: T[],
  concurrency: number,
  worker: (item: T) => Promise<R>,
): Promise<R[]> {
  const results = new Array<R>(items.length);
  let next = 0;
  async function lane(): Promise<void> {
    while (next < items.length) {
      const index = next++;
      results[index] = await worker(items[index]);
    }
  }
  const lanes = Array.from({ length: Math.max(1, Math.min(concurrency, items.length)) }, lane);
  await Promise.all(lanes);
  return results;
}

export interface BatchOptions {
  concurrency?: number;
  log?: (message: string) => void;
}

export async function batchOcr(
  manifestPath: string,
  outPath: string,
  engine: OcrEngine,
  options: BatchOptions = {},
): Promise<BatchResult> {
  const log = options.log ?? ((message: string) => console.error(message));
  const entries = await readManifest(manifestPath);
  const done = await existingIds(outPath);

  const pending = entries.filter((e) => !done.has(e.sampleId));
  const skipped = entries.length - pending.length;

  type Outcome = { record?: ReferenceRecord; failure?: { sampleId: string; error: string } };
  const outcomes = await mapPool(pending, options.concurrency ?? 4, async (entry): Promise<Outcome> => {
    try {
      return { record: await ocrReference(entry.sampleId, entry.imagePath, engine) };
    } catch (err) {
      const message = (err as Error).message;
      log(`SKIP ${entry.sampleId}: ${message}`);
      return { failure: { sampleId: entry.sampleId, error: message } };
    }
  });

  // Single writer: one append keeps the file consistent under re-runs.
  const records = outcomes.flatMap((o) => (o.record ? [o.record] : []));
  const failures = outcomes.flatMap((o) => (o.failure ? [o.failure] : []));
  if (records.length > 0) {
    await fs.mkdir(path.dirname(path.resolve(outPath)), { recursive: true });
    const lines = records.map((r) => JSON.stringify(r)).join("\n") + "\n";
    await fs.appendFile(outPath, lines, "utf-8");
  }
  return { written: records.length, skipped, failed: failures.length, failures };
}
