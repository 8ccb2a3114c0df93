/** Typed client for the segmentation job service.
 *
 * Every number the UI displays comes out of these responses; the client
 * never derives domain results locally.
 */

export interface RecordRow {
  source_id?: string;
  path: string;
  dims?: number[];
  spacing_mm?: number[];
  slice_count?: number;
  datatype?: number;
  file_size?: number;
  error?: string;
}

export interface ModelBinding {
  kind: "threshold" | "unet";
  lo?: number;
  hi?: number;
  weights?: string;
  config?: string;
}

export interface ModelSelection {
  liver: ModelBinding | null;
  tumor: ModelBinding | null;
  vessel: ModelBinding | null;
}

export interface VolumeView {
  path: string;
  stem: string;
  phase: string;
  percent: number;
  error: string | null;
  outputs: string[];
}

export interface JobView {
  id: string;
  created: number;
  out_dir: string;
  volumes: VolumeView[];
  done: boolean;
}

export interface ProgressEvent_ {
  id: number;
  job: string;
  volume: string;
  phase: string;
  percent: number;
  message?: string;
  error?: string;
}

export type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

const defaultFetch: FetchLike = (input, init) => fetch(input, init);

export class ServiceError extends Error {
  constructor(message: string, readonly status?: number) {
    super(message);
  }
}

async function asJson(resp: Response): Promise<unknown> {
  if (!resp.ok) {
    throw new ServiceError(`service responded ${resp.status}`, resp.status);
  }
  return resp.json();
}

export async function fetchRecords(
  paths: string[],
  fetchImpl: FetchLike = defaultFetch,
): Promise<RecordRow[]> {
  const query = encodeURIComponent(paths.join(","));
  const resp = await fetchImpl(`/api/records?path=${query}`);
  return (await asJson(resp)) as RecordRow[];
}

export async function createJob(
  volumes: string[],
  models: ModelSelection,
  fetchImpl: FetchLike = defaultFetch,
): Promise<string> {
  if (!models.liver || !models.tumor || !models.vessel) {
    throw new ServiceError("all three models must be selected");
  }
  const resp = await fetchImpl("/api/jobs", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify({ volumes, models }),
  });
  const doc = (await asJson(resp)) as { id: string };
  return doc.id;
}

export async function getJob(
  jobId: string,
  fetchImpl: FetchLike = defaultFetch,
): Promise<JobView> {
  const resp = await fetchImpl(`/api/jobs/${jobId}`);
  return (await asJson(resp)) as JobView;
}

export function outputUrl(jobId: string, volume: string, filename: string): string {
  return `/api/jobs/${jobId}/outputs/${volume}/${filename}`;
}

/** NIfTI is the only selectable record type. */
export function isNiftiPath(path: string): boolean {
  const lower = path.trim().toLowerCase();
  return lower.endsWith(".nii") || lower.endsWith(".nii.gz");
}

export interface EventStreamHandle {
  close(): void;
}

export interface EventSourceLike {
  onmessage: ((ev: { data: string }) => void) | null;
  onerror: ((ev: unknown) => void) | null;
  close(): void;
}

export type EventSourceFactory = (url: string) => EventSourceLike;

const defaultEventSourceFactory: EventSourceFactory = (url) =>
  new EventSource(url) as unknown as EventSourceLike;

/**
 * Subscribe to a job's event stream.  On stream drop, resubscribes
 * automatically, resuming after the last event id seen so no progress
 * update is lost or duplicated.
 */
export function subscribeEvents(
  jobId: string,
  onEvent: (event: ProgressEvent_) => void,
  factory: EventSourceFactory = defaultEventSourceFactory,
  retryDelayMs = 1000,
): EventStreamHandle {
  let lastId = -1;
  let closed = false;
  let source: EventSourceLike | null = null;

  const open = () => {
    if (closed) return;
    source = factory(`/api/jobs/${jobId}/events?last_event_id=${lastId}`);
    source.onmessage = (ev) => {
      const event = JSON.parse(ev.data) as ProgressEvent_;
      if (event.id <= lastId) return; // duplicate after a racy reconnect
      lastId = event.id;
      onEvent(event);
    };
    source.onerror = () => {
      source?.close();
      if (!closed) setTimeout(open, retryDelayMs);
    };
  };

  open();
  return {
    close() {
      closed = true;
      source?.close();
    },
  };
}
