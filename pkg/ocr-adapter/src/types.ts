// Wire formats shared with the docforge pipeline.

/** One line of the reference JSONL consumed by `docforge filter`. */
export interface ReferenceRecord {
  sample_id: string;
  reference_text: string;
  engine: string;
  engine_version: string;
}

/** The subset of a docforge sample manifest line the adapter needs. */
export interface ManifestEntry {
  sampleId: string;
  imagePath: string;
}

export interface BatchResult {
  written: number;
  skipped: number;
  failed: number;
  failures: { sampleId: string; error: string }[];
}
