#!/usr/bin/env node
// docforge-ocr --manifest M.jsonl --out R.jsonl --engine NAME [--cmd TEMPLATE]
//
// Exit codes mirror the docforge pipeline: 0 success, 2 bad flags,
// 3 unreadable manifest, 4 partial failure (some images skipped).

import { realpathSync } from "node:fs";
import { fileURLToPath } from "node:url";

import { batchOcr } from "./batch.js";
import { EngineError, makeEngine } from "./engines.js";

function getArg(argv: string[], flag: string): string | null {
  const index = argv.indexOf(flag);
  if (index === -1) return null;
  const value = argv[index + 1];
  if (!value || value.startsWith("--")) return null;
  return value;
}

const USAGE =
  "usage: docforge-ocr --manifest M.jsonl --out R.jsonl --engine NAME " +
  "[--cmd 'prog {input}'] [--engine-version V] [--concurrency N]";

export async function main(argv: string[]): Promise<number> {
  const manifest = getArg(argv, "--manifest");
  const out = getArg(argv, "--out");
  const engineName = getArg(argv, "--engine") ?? "sidecar";
  if (!manifest || !out) {
    console.error(USAGE);
    return 2;
  }
  const concurrencyRaw = getArg(argv, "--concurrency");
  const concurrency = concurrencyRaw ? Number(concurrencyRaw) : 4;
  if (!Number.isInteger(concurrency) || concurrency < 1) {
    console.error(`bad --concurrency: ${concurrencyRaw}`);
    return 2;
  }

  let engine;
  try {
    engine = makeEngine(engineName, {
      cmd: getArg(argv, "--cmd") ?? undefined,
      version: getArg(argv, "--engine-version") ?? undefined,
    });
  } catch (err) {
    console.error((err as EngineError).message);
    return 2;
  }

  let result;
  try {
    result = await batchOcr(manifest, out, engine, { concurrency });
  } catch (err) {
    console.error(`input error: ${(err as Error).message}`);
    return 3;
  }
  console.log(
    `wrote ${result.written} reference records to ${out} ` +
      `(${result.skipped} already present, ${result.failed} failed)`,
  );
  return result.failed > 0 ? 4 : 0;
}

function invokedDirectly(): boolean {
  if (!process.argv[1]) return false;
  try {
    return realpathSync(process.argv[1]) === fileURLToPath(import.meta.url);
  } catch {
    return false;
  }
}

if (invokedDirectly()) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
