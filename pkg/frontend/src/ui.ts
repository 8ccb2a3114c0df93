/** DOM construction.  Every function returns detached elements built from
 * service data; no domain math happens here.
 */
import { outputUrl, type RecordRow, type VolumeView } from "./api.js";
import { OUTPUT_FILES } from "./state.js";

export interface ColumnSpec {
  key: string;
  label: string;
  render: (row: RecordRow) => string;
}

/** The metadata table's available columns; visibility is user-togglable. */
export const RECORD_COLUMNS: ColumnSpec[] = [
  { key: "file", label: "File", render: (r) => r.source_id ?? r.path },
  { key: "dims", label: "Dimensions", render: (r) => r.dims?.join(" × ") ?? "—" },
  {
    key: "spacing",
    label: "Spacing (mm)",
    render: (r) => r.spacing_mm?.map((s) => s.toFixed(2)).join(" × ") ?? "—",
  },
  { key: "slices", label: "Slices", render: (r) => r.slice_count?.toString() ?? "—" },
  {
    key: "size",
    label: "File size",
    render: (r) => (r.file_size !== undefined ? formatBytes(r.file_size) : "—"),
  },
  { key: "status", label: "Status", render: (r) => (r.error ? `error: ${r.error}` : "ok") },
];

export function formatBytes(n: number): string {
  if (n < 1024) return `${n} B`;
  if (n < 1024 * 1024) return `${(n / 1024).toFixed(1)} KiB`;
  return `${(n / (1024 * 1024)).toFixed(1)} MiB`;
}

export function recordTable(
  doc: Document,
  rows: RecordRow[],
  visible: Set<string>,
): HTMLTableElement {
  const table = doc.createElement("table");
  table.className = "records";
  const columns = RECORD_COLUMNS.filter((c) => visible.has(c.key));
  const thead = doc.createElement("thead");
  const head = doc.createElement("tr");
  for (const col of columns) {
    const th = doc.createElement("th");
    th.textContent = col.label;
    head.appendChild(th);
  }
  thead.appendChild(head);
  table.appendChild(thead);
  const body = doc.createElement("tbody");
  for (const row of rows) {
    const tr = doc.createElement("tr");
    tr.className = row.error ? "record-error" : "record-ok";
    for (const col of columns) {
      const td = doc.createElement("td");
      td.textContent = col.render(row);
      tr.appendChild(td);
    }
    body.appendChild(tr);
  }
  table.appendChild(body);
  return table;
}

export function columnToggles(
  doc: Document,
  visible: Set<string>,
  onChange: () => void,
): HTMLElement {
  const box = doc.createElement("div");
  box.className = "column-toggles";
  for (const col of RECORD_COLUMNS) {
    const label = doc.createElement("label");
    const input = doc.createElement("input");
    input.type = "checkbox";
    input.checked = visible.has(col.key);
    input.dataset.column = col.key;
    input.addEventListener("change", () => {
      if (input.checked) visible.add(col.key);
      else visible.delete(col.key);
      onChange();
    });
    label.appendChild(input);
    label.appendChild(doc.createTextNode(col.label));
    box.appendChild(label);
  }
  return box;
}

export function volumeRow(doc: Document, jobId: string, vol: VolumeView): HTMLElement {
  const row = doc.createElement("div");
  row.className = `volume volume-${vol.phase}`;
  row.dataset.stem = vol.stem;

  const title = doc.createElement("span");
  title.className = "volume-name";
  title.textContent = vol.stem;
  row.appendChild(title);

  const bar = doc.createElement("progress");
  bar.max = 100;
  bar.value = vol.percent;
  row.appendChild(bar);

  const phase = doc.createElement("span");
  phase.className = "volume-phase";
  phase.textContent = vol.error ? `failed: ${vol.error}` : `${vol.phase} ${vol.percent}%`;
  row.appendChild(phase);

  if (vol.phase === "done") {
    const links = doc.createElement("span");
    links.className = "volume-outputs";
    for (const name of OUTPUT_FILES) {
      const a = doc.createElement("a");
      a.href = outputUrl(jobId, vol.stem, name);
      a.textContent = name;
      a.setAttribute("download", name);
      links.appendChild(a);
    }
    row.appendChild(links);
  }
  return row;
}

export function bannerBox(doc: Document, message: string, onRetry?: () => void): HTMLElement {
  const box = doc.createElement("div");
  box.className = "banner";
  box.textContent = message;
  if (onRetry) {
    const btn = doc.createElement("button");
    btn.textContent = "Retry";
    btn.addEventListener("click", onRetry);
    box.appendChild(btn);
  }
  return box;
}

export const INSTRUCTIONS = [
  "1. Enter the paths of NIfTI records (.nii or .nii.gz) and press Search Records.",
  "2. Review the metadata table; files that fail to parse are flagged.",
  "3. Bind a model for each tissue (liver, tumors, vessels), or load the demo models.",
  "4. Press Segment Volumes and watch per-volume progress.",
  "5. When a volume reaches done, download its masks and the 3D model files.",
];

export function instructionsPanel(doc: Document): HTMLElement {
  const panel = doc.createElement("ol");
  panel.className = "instructions";
  for (const line of INSTRUCTIONS) {
    const li = doc.createElement("li");
    li.textContent = line.replace(/^\d+\.\s*/, "");
    panel.appendChild(li);
  }
  return panel;
}
