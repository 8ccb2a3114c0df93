/** Application state: selected records, model bindings, and the live view
 * of the running job.  All transitions are pure so they can be tested
 * without a DOM or a network.
 */
import type {
  JobView,
  ModelBinding,
  ModelSelection,
  ProgressEvent_,
  RecordRow,
  VolumeView,
} from "./api.js";

/** Pipeline order used for rendering; the service is the source of truth. */
export const PHASE_ORDER = [
  "queued",
  "preprocessing",
  "liver",
  "tumors",
  "vessels",
  "reconstructing",
  "writing",
  "done",
  "failed",
] as const;

export const OUTPUT_FILES = [
  "liver.nii.gz",
  "tumors.nii.gz",
  "vessels.nii.gz",
  "complete_model.obj",
  "complete_model.mtl",
] as const;

export interface AppState {
  records: RecordRow[];
  models: ModelSelection;
  jobId: string | null;
  volumes: Map<string, VolumeView>;
  banner: string | null;
}

export function initialState(): AppState {
  return {
    records: [],
    models: { liver: null, tumor: null, vessel: null },
    jobId: null,
    volumes: new Map(),
    banner: null,
  };
}

export function canLaunch(state: AppState): boolean {
  return (
    state.records.some((r) => !r.error) &&
    state.models.liver !== null &&
    state.models.tumor !== null &&
    state.models.vessel !== null &&
    state.jobId === null
  );
}

export function setModel(
  state: AppState,
  tissue: keyof ModelSelection,
  binding: ModelBinding | null,
): void {
  state.models[tissue] = binding;
}

/** Replace the volume table from a full job snapshot (poll or restore). */
export function applySnapshot(state: AppState, job: JobView): void {
  state.jobId = job.id;
  state.volumes = new Map(job.volumes.map((v) => [v.stem, { ...v }]));
}

/** Fold one progress event in.  Percent is kept monotone per volume. */
export function applyEvent(state: AppState, event: ProgressEvent_): void {
  const current = state.volumes.get(event.volume);
  if (!current) return;
  current.phase = event.phase;
  current.percent = Math.max(current.percent, event.percent);
  if (event.error) current.error = event.error;
}

export function jobDone(state: AppState): boolean {
  if (state.volumes.size === 0) return false;
  for (const v of state.volumes.values()) {
    if (v.phase !== "done" && v.phase !== "failed") return false;
  }
  return true;
}

// --- persistence of the active job across page reloads ---

const STORAGE_KEY = "airad.activeJob";

export interface StorageLike {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
  removeItem(key: string): void;
}

export function rememberJob(storage: StorageLike, jobId: string): void {
  storage.setItem(STORAGE_KEY, jobId);
}

export function recallJob(storage: StorageLike): string | null {
  return storage.getItem(STORAGE_KEY);
}

export function forgetJob(storage: StorageLike): void {
  storage.removeItem(STORAGE_KEY);
}
