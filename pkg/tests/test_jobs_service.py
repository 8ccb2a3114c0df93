import json
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from airad import jobs, nifti
from airad.cascade import CascadeConfig, run_cascade
from airad.cli import main
from airad.phantom import PhantomSpec, generate_phantom
from airad.preprocess import PreprocessConfig
from airad.service import create_app

from test_cascade import PHANTOM_MODELS, NO_RESAMPLE, phantom_config


@pytest.fixture
def phantom_file(tmp_path):
    volume, gt = generate_phantom(PhantomSpec())
    path = tmp_path / "phantom_0.nii.gz"
    nifti.write_nifti(volume, path)
    gt_path = tmp_path / "phantom_0_gt.nii.gz"
    nifti.write_nifti(gt, gt_path)
    return path, gt_path


def test_inspect_records_good_and_bad(phantom_file, tmp_path):
    path, _ = phantom_file
    bad = tmp_path / "broken.nii"
    bad.write_bytes(b"not a nifti at all")
    rows = jobs.inspect_records([path, bad, tmp_path / "missing.nii"])
    assert rows[0]["source_id"] == "phantom_0"
    assert rows[0]["dims"] == [64, 64, 64]
    assert rows[0]["slice_count"] == 64
    assert rows[0]["file_size"] > 0
    assert "error" in rows[1]
    assert "error" in rows[2]


def test_job_create_stems():
    cfg = phantom_config()
    job = jobs.Job.create(["/a/b/scan.nii.gz", "c.nii", "d"], cfg, "out")
    assert [v.stem for v in job.volumes] == ["scan", "c", "d"]
    assert len(job.id) == 12
    assert job.as_dict()["done"] is False


def test_write_bundle_five_files(tmp_path):
    volume, gt = generate_phantom(PhantomSpec())
    result = run_cascade(volume, phantom_config())
    outputs = jobs.write_bundle(result, tmp_path, "phantom_0")
    assert [p.rsplit("/", 1)[-1] for p in outputs] == list(jobs.OUTPUT_FILES)
    for p in outputs:
        assert (tmp_path / "phantom_0" / p.rsplit("/", 1)[-1]).exists()
    liver = nifti.read_labelmask(tmp_path / "phantom_0" / "liver.nii.gz")
    np.testing.assert_array_equal(liver.labels, result.liver.labels)


def test_run_job_success_events(phantom_file, tmp_path):
    path, _ = phantom_file
    job = jobs.Job.create([path], phantom_config(), tmp_path / "out")
    events = []
    jobs.run_job(job, on_event=events.append)
    assert job.volumes[0].phase == "done"
    assert job.volumes[0].percent == 100
    assert job.as_dict()["done"] is True
    percents = [e["percent"] for e in events]
    assert percents == sorted(percents)  # monotone progress
    phases = [e["phase"] for e in events]
    for expected in ("preprocessing", "liver", "tumors", "vessels",
                     "reconstructing", "writing", "done"):
        assert expected in phases
    assert all(p in jobs.PHASES for p in phases)


def test_run_job_isolates_corrupt_volume(phantom_file, tmp_path):
    path, _ = phantom_file
    bad = tmp_path / "garbage.nii"
    bad.write_bytes(b"\x00" * 100)
    job = jobs.Job.create([bad, path], phantom_config(), tmp_path / "out")
    events = []
    jobs.run_job(job, on_event=events.append)
    assert job.volumes[0].phase == "failed"
    assert job.volumes[0].error
    assert job.volumes[1].phase == "done"
    assert any(e["phase"] == "failed" and "error" in e for e in events)
    assert len(job.volumes[1].outputs) == 5


# --- CLI ---

def write_binding(path, spec):
    path.write_text(json.dumps(spec))
    return str(path)


@pytest.fixture
def threshold_bindings(tmp_path):
    return [write_binding(tmp_path / f"{name}.json", spec) for name, spec in
            (("liver", PHANTOM_MODELS["liver_model"]),
             ("tumor", PHANTOM_MODELS["tumor_model"]),
             ("vessel", PHANTOM_MODELS["vessel_model"]))]


def test_cli_inspect(phantom_file, capsys):
    path, _ = phantom_file
    assert main(["inspect", str(path)]) == 0
    rows = json.loads(capsys.readouterr().out)
    assert rows[0]["dims"] == [64, 64, 64]
    assert main(["inspect", str(path) + ".does-not-exist"]) == 1


def test_cli_phantom_writes_pair(tmp_path, capsys):
    out = tmp_path / "ph"
    assert main(["phantom", "--out", str(out), "--seed", "7"]) == 0
    assert (out / "phantom_7.nii.gz").exists()
    assert (out / "phantom_7_gt.nii.gz").exists()


def test_cli_segment_end_to_end(phantom_file, threshold_bindings, tmp_path,
                                capsys):
    path, _ = phantom_file
    liver, tumor, vessel = threshold_bindings
    out = tmp_path / "results"
    code = main(["segment", "--input", str(path),
                 "--liver-model", liver, "--tumor-model", tumor,
                 "--vessel-model", vessel, "--out", str(out)])
    assert code == 0
    for name in jobs.OUTPUT_FILES:
        assert (out / "phantom_0" / name).exists()
    stdout = capsys.readouterr().out
    assert "done 100%" in stdout


def test_cli_segment_failure_exit_code(threshold_bindings, tmp_path, capsys):
    liver, tumor, vessel = threshold_bindings
    bad = tmp_path / "bad.nii"
    bad.write_bytes(b"nope")
    code = main(["segment", "--input", str(bad),
                 "--liver-model", liver, "--tumor-model", tumor,
                 "--vessel-model", vessel, "--out", str(tmp_path / "o")])
    assert code == 1
    assert "FAILED" in capsys.readouterr().err


def test_cli_segment_missing_sidecar(tmp_path, capsys):
    weights = tmp_path / "w.unetw"
    weights.write_bytes(b"")
    code = main(["segment", "--input", "x.nii",
                 "--liver-model", str(weights), "--tumor-model", str(weights),
                 "--vessel-model", str(weights)])
    assert code == 2
    assert "sidecar" in capsys.readouterr().err


def test_cli_evaluate_perfect_self(phantom_file, capsys):
    _, gt = phantom_file
    assert main(["evaluate", "--pred", str(gt), "--gt", str(gt)]) == 0
    reports = json.loads(capsys.readouterr().out)
    assert reports["liver"]["dice"] == 1.0
    assert reports["tumor"]["hd_mm"] == 0.0


# --- HTTP service ---

@pytest.fixture
def client(tmp_path):
    app = create_app(out_dir=str(tmp_path / "served_out"), workers=1)
    with TestClient(app) as c:
        yield c


def job_body(volume_path):
    return {
        "volumes": [str(volume_path)],
        "models": {"liver": PHANTOM_MODELS["liver_model"],
                   "tumor": PHANTOM_MODELS["tumor_model"],
                   "vessel": PHANTOM_MODELS["vessel_model"]},
        "config": {"preprocess": {"rescale_factor": 1.0,
                                  "apply_clahe": False}},
    }


def wait_done(client, job_id, tries=200):
    for _ in range(tries):
        doc = client.get(f"/api/jobs/{job_id}").json()
        if doc["done"]:
            return doc
        time.sleep(0.05)
    raise AssertionError("job never finished")


def test_records_endpoint(client, phantom_file, tmp_path):
    path, _ = phantom_file
    bad = tmp_path / "nope.nii"
    r = client.get("/api/records", params={"path": f"{path},{bad}"})
    assert r.status_code == 200
    rows = r.json()
    assert rows[0]["source_id"] == "phantom_0"
    assert "error" in rows[1]


def test_job_lifecycle_and_outputs(client, phantom_file):
    path, _ = phantom_file
    r = client.post("/api/jobs", json=job_body(path))
    assert r.status_code == 202
    job_id = r.json()["id"]
    doc = wait_done(client, job_id)
    vol = doc["volumes"][0]
    assert vol["phase"] == "done" and vol["percent"] == 100
    assert len(vol["outputs"]) == 5
    out = client.get(f"/api/jobs/{job_id}/outputs/phantom_0/liver.nii.gz")
    assert out.status_code == 200
    assert len(out.content) > 0
    missing = client.get(f"/api/jobs/{job_id}/outputs/phantom_0/etc_passwd")
    assert missing.status_code == 404


def test_sse_stream_and_resume(client, phantom_file):
    path, _ = phantom_file
    job_id = client.post("/api/jobs", json=job_body(path)).json()["id"]
    wait_done(client, job_id)

    def read_events(**kwargs):
        ids, datas = [], []
        with client.stream("GET", f"/api/jobs/{job_id}/events",
                           **kwargs) as r:
            assert r.headers["content-type"].startswith("text/event-stream")
            for line in r.iter_lines():
                if line.startswith("id: "):
                    ids.append(int(line[4:]))
                elif line.startswith("data: "):
                    datas.append(json.loads(line[6:]))
        return ids, datas

    ids, datas = read_events()
    assert ids == list(range(len(ids)))  # sequential from 0
    assert datas[-1]["phase"] == "done"
    resume_after = ids[2]
    ids2, _ = read_events(headers={"Last-Event-ID": str(resume_after)})
    assert ids2 == list(range(resume_after + 1, len(ids)))


def test_job_404s(client):
    assert client.get("/api/jobs/feedfacecafe").status_code == 404
    assert client.get("/api/jobs/feedfacecafe/events").status_code == 404


def test_job_422_on_missing_models(client, phantom_file):
    path, _ = phantom_file
    r = client.post("/api/jobs", json={"volumes": [str(path)], "models": {}})
    assert r.status_code == 422
