// OCR engine abstraction: a configured external command or an in-process
// reader. Engines return the page text with regions joined by single spaces;
// the downstream F1 filter is order-invariant, so no layout reconstruction
// is attempted.

import { execFile } from "node:child_process";
import { promises as fs } from "node:fs";

export interface OcrEngine {
  readonly name: string;
  readonly version: string;
  recognize(imagePath: string): Promise<string>;
}

export class EngineError extends Error {}

function joinRegions(parts: string[]): string {
  return parts
    .map((p) => p.replace(/\s+/g, " ").trim())
    .filter((p) => p.length > 0)
    .join(" ");
}

/** Accepts plain text, {"text": ...}, or a list of regions ([{text} | string]). */
export function parseEngineOutput(stdout: string): string {
  const trimmed = stdout.trim();
  if (trimmed.startsWith("{") || trimmed.startsWith("[")) {
    try {
      const parsed = JSON.parse(trimmed);
      if (Array.isArray(parsed)) {
        const regions = parsed.map((item) =>
          typeof item === "string" ? item : String(item?.text ?? ""),
        );
        return joinRegions(regions);
      }
      if (parsed && typeof parsed.text === "string") {
        return joinRegions([parsed.text]);
      }
    } catch {
      // Fall through: not JSON after all.
    }
  }
  return joinRegions(trimmed.split(/\r?\n/));
}

/**
 * Runs an external OCR command. The template is whitespace-split; the
 * {input} token is replaced with the image path. Contract: exit 0 and the
 * recognized text (plain or JSON) on stdout.
 */
export class CommandEngine implements OcrEngine {
  readonly name: string;
  readonly version: string;
  private readonly argv: string[];
  private readonly timeoutMs: number;

  constructor(name: string, template: string, version = "unknown", timeoutMs = 60000) {
    this.name = name;
    this.version = version;
    this.timeoutMs = timeoutMs;
    this.argv = template.split(/\s+/).filter((a) => a.length > 0);
    if (!this.argv.some((a) => a.includes("{input}"))) {
      throw new EngineError(`engine command template needs an {input} token: ${template}`);
    }
  }

  recognize(imagePath: string): Promise<string> {
    const [cmd, ...rest] = this.argv.map((a) => a.replaceAll("{input}", imagePath));
    return new Promise((resolve, reject) => {
      execFile(cmd, rest, { timeout: this.timeoutMs, maxBuffer: 16 * 1024 * 1024 }, (error, stdout, stderr) => {
        if (error) {
          reject(new EngineError(`${this.name} failed: ${stderr.trim() || error.message}`));
        } else {
          resolve(parseEngineOutput(stdout));
        }
      });
    });
  }
}

/**
 * Reads ground-truth text from a `<image>.txt` sidecar file. Stands in for a
 * real engine on machines without one installed; renders produced together
 * with their source text (synthetic fixtures) use this convention.
 */
export class SidecarEngine implements OcrEngine {
  readonly name = "sidecar";
  readonly version = "1";

  async recognize(imagePath: string): Promise<string> {
    const sidecar = `${imagePath}.txt`;
    let raw: string;
    try {
      raw = await fs.readFile(sidecar, "utf-8");
    } catch (err) {
      throw new EngineError(`no sidecar text at ${sidecar}: ${(err as Error).message}`);
    }
    return joinRegions(raw.split(/\r?\n/));
  }
}

export interface EngineOptions {
  cmd?: string;
  version?: string;
  timeoutMs?: number;
}

const COMMAND_PRESETS: Record<string, string> = {
  tesseract: "tesseract {input} stdout",
};

export function makeEngine(name: string, options: EngineOptions = {}): OcrEngine {
  if (name === "sidecar") {
    return new SidecarEngine();
  }
  const template = options.cmd ?? COMMAND_PRESETS[name];
  if (!template) {
    throw new EngineError(
      `unknown engine '${name}': pass --cmd with a {input} template or use one of ` +
        `[sidecar, ${Object.keys(COMMAND_PRESETS).join(", ")}]`,
    );
  }
  return new CommandEngine(name, template, options.version, options.timeoutMs);
}
