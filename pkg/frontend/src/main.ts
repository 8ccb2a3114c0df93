/** Page wiring: connects the DOM to the service client and state. */
import {
  createJob,
  fetchRecords,
  getJob,
  isNiftiPath,
  subscribeEvents,
  type EventStreamHandle,
  type ModelBinding,
} from "./api.js";
import {
  applyEvent,
  applySnapshot,
  canLaunch,
  forgetJob,
  initialState,
  jobDone,
  recallJob,
  rememberJob,
  setModel,
} from "./state.js";
import {
  bannerBox,
  columnToggles,
  instructionsPanel,
  recordTable,
  volumeRow,
  RECORD_COLUMNS,
} from "./ui.js";

const TISSUES = ["liver", "tumor", "vessel"] as const;

const DEMO_MODELS: Record<(typeof TISSUES)[number], ModelBinding> = {
  liver: { kind: "threshold", lo: 0.3, hi: 1.01 },
  tumor: { kind: "threshold", lo: 0.66, hi: 0.86 },
  vessel: { kind: "threshold", lo: 0.9, hi: 1.01 },
};

const state = initialState();
const visibleColumns = new Set(RECORD_COLUMNS.map((c) => c.key));
let stream: EventStreamHandle | null = null;

function $(id: string): HTMLElement {
  const el = document.getElementById(id);
  if (!el) throw new Error(`missing element #${id}`);
  return el;
}

function renderRecords(): void {
  const host = $("records");
  host.replaceChildren(recordTable(document, state.records, visibleColumns));
  renderLaunch();
}

function renderVolumes(): void {
  const host = $("volumes");
  if (!state.jobId) {
    host.replaceChildren();
    return;
  }
  const rows = [...state.volumes.values()].map((v) =>
    volumeRow(document, state.jobId as string, v),
  );
  host.replaceChildren(...rows);
}

function renderBanner(onRetry?: () => void): void {
  const host = $("banner");
  host.replaceChildren();
  if (state.banner) host.appendChild(bannerBox(document, state.banner, onRetry));
}

function renderLaunch(): void {
  const btn = $("launch") as HTMLButtonElement;
  btn.disabled = !canLaunch(state);
  $("launch-hint").textContent = btn.disabled
    ? "Select records and all three models first."
    : "";
}

function parsePaths(): { accepted: string[]; rejected: string[] } {
  const raw = ($("paths") as HTMLInputElement).value;
  const parts = raw
    .split(",")
    .map((p) => p.trim())
    .filter((p) => p.length > 0);
  return {
    accepted: parts.filter(isNiftiPath),
    rejected: parts.filter((p) => !isNiftiPath(p)),
  };
}

async function searchRecords(): Promise<void> {
  const { accepted, rejected } = parsePaths();
  state.banner = rejected.length
    ? `ignored non-NIfTI selections (need .nii/.nii.gz): ${rejected.join(", ")}`
    : null;
  renderBanner();
  if (accepted.length === 0) {
    state.records = [];
    renderRecords();
    return;
  }
  try {
    state.records = await fetchRecords(accepted);
  } catch (err) {
    state.banner = `service unreachable: ${String(err)}`;
    renderBanner(() => void searchRecords());
    return;
  }
  renderRecords();
}

function readBinding(tissue: (typeof TISSUES)[number]): void {
  const kind = ($(`${tissue}-kind`) as HTMLSelectElement).value;
  let binding: ModelBinding | null = null;
  if (kind === "threshold") {
    const lo = parseFloat(($(`${tissue}-lo`) as HTMLInputElement).value);
    const hi = parseFloat(($(`${tissue}-hi`) as HTMLInputElement).value);
    if (Number.isFinite(lo) && Number.isFinite(hi)) binding = { kind: "threshold", lo, hi };
  } else if (kind === "unet") {
    const weights = ($(`${tissue}-weights`) as HTMLInputElement).value.trim();
    const config = ($(`${tissue}-config`) as HTMLInputElement).value.trim();
    if (weights && config) binding = { kind: "unet", weights, config };
  }
  setModel(state, tissue, binding);
  renderLaunch();
}

function loadDemoModels(): void {
  for (const tissue of TISSUES) {
    const demo = DEMO_MODELS[tissue];
    ($(`${tissue}-kind`) as HTMLSelectElement).value = "threshold";
    ($(`${tissue}-lo`) as HTMLInputElement).value = String(demo.lo);
    ($(`${tissue}-hi`) as HTMLInputElement).value = String(demo.hi);
    setModel(state, tissue, demo);
  }
  renderLaunch();
}

function watch(jobId: string): void {
  stream?.close();
  stream = subscribeEvents(jobId, (event) => {
    applyEvent(state, event);
    renderVolumes();
    if (jobDone(state)) {
      stream?.close();
      forgetJob(localStorage);
    }
  });
}

async function launch(): Promise<void> {
  const paths = state.records.filter((r) => !r.error).map((r) => r.path);
  try {
    const jobId = await createJob(paths, state.models);
    rememberJob(localStorage, jobId);
    applySnapshot(state, await getJob(jobId));
    renderVolumes();
    renderLaunch();
    watch(jobId);
  } catch (err) {
    state.banner = `failed to launch: ${String(err)}`;
    renderBanner();
  }
}

async function restoreFromStorage(): Promise<void> {
  const jobId = recallJob(localStorage);
  if (!jobId) return;
  try {
    const job = await getJob(jobId);
    applySnapshot(state, job);
    renderVolumes();
    if (job.done) forgetJob(localStorage);
    else watch(jobId);
  } catch {
    forgetJob(localStorage); // job gone (service restarted); start fresh
  }
}

export function init(): void {
  $("instructions").replaceChildren(instructionsPanel(document));
  $("column-toggles").replaceChildren(
    columnToggles(document, visibleColumns, renderRecords),
  );
  $("search").addEventListener("click", () => void searchRecords());
  $("demo-models").addEventListener("click", loadDemoModels);
  $("launch").addEventListener("click", () => void launch());
  for (const tissue of TISSUES) {
    for (const suffix of ["kind", "lo", "hi", "weights", "config"]) {
      $(`${tissue}-${suffix}`).addEventListener("change", () => readBinding(tissue));
    }
  }
  renderLaunch();
  void restoreFromStorage();
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  init();
}
