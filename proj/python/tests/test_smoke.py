import math
import os
from pathlib import Path

import pytest

import commentsim

FIXTURES = Path(os.environ.get("COMMENTSIM_FIXTURE_DIR", Path(__file__).resolve().parents[2] / "tests" / "fixtures"))
PERSONAS = FIXTURES / "personas.txt"


@pytest.fixture(scope="module")
def clip(tmp_path_factory):
    cv2 = pytest.importorskip("cv2")
    np = pytest.importorskip("numpy")
    path = tmp_path_factory.mktemp("video") / "clip.avi"
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), 5.0, (64, 48))
    assert writer.isOpened()
    for i in range(40):
        frame = np.full((48, 64, 3), (i // 5) * 30 % 256, dtype=np.uint8)
        frame[10:20, i % 50 : i % 50 + 10] = 255
        writer.write(frame)
    writer.release()
    return path


def test_metric_fixtures():
    assert commentsim.tokenize("Hello, world!") == ["hello", "world"]
    assert commentsim.distinct(["a a a"], 1) == pytest.approx((1.0, 1 / 3))
    assert commentsim.self_bleu(["same words here"] * 3) == 1.0
    assert commentsim.rouge_n_precision("garlic bread space", "garlic bread in orbit", 1) == pytest.approx(2 / 3)
    assert commentsim.rouge_l_precision("a b c", "a x c") == pytest.approx(2 / 3)
    assert commentsim.average_length(["abc", "été"]) == 3.0
    value, pairs = commentsim.embedding_group_score(["one two", "two three", "three four"])
    assert pairs == 3 and 0.0 <= value <= 1.0


def test_plan_and_cosine():
    assert commentsim.plan_batch(30) == (21, 9)
    assert commentsim.plan_batch(1) == (1, 0)
    assert commentsim.cosine_similarity([1.0, 2.0], [2.0, 4.0]) == pytest.approx(1.0)
    assert commentsim.cosine_similarity([1.0, 0.0], [0.0, 1.0]) == 0.0


def test_wilcoxon_matches_reference():
    x = [1.83, 0.50, 1.62, 2.48, 1.68, 1.88, 1.55, 3.06, 1.30]
    y = [0.878, 0.647, 0.598, 2.05, 1.06, 1.29, 1.06, 3.14, 1.29]
    r = commentsim.wilcoxon(x, y)
    assert r["statistic"] == 5.0
    assert math.isclose(r["p_value"], 0.0390625)


def test_errors_carry_kind():
    with pytest.raises(commentsim.Error) as info:
        commentsim.self_bleu(["alone"])
    assert info.value.kind == "input"
    with pytest.raises(commentsim.Error) as info:
        commentsim.plan_batch(0)
    assert info.value.kind in {"input", "validation"}


def test_evaluate_report():
    report = commentsim.evaluate(
        {"ours": ["garlic bread in orbit", "space baking rules"], "base": ["nice", "nice video", "wow"]},
        "An astronaut bakes garlic bread.",
        mock=True,
    )
    names = {(r["corpus_label"], r["metric_name"]) for r in report["rows"]}
    assert ("ours", "average_length") in names
    assert ("base", "llm_relevance") in names
    assert all(r["params"] for r in report["rows"])


def test_pipeline_round_trip(clip, tmp_path):
    options = dict(mock=True, seed=7, work_dir=tmp_path / "work", personas=PERSONAS)
    manifest = commentsim.run_pipeline(clip, "Garlic bread in space", count=10, **options)
    assert manifest["comment_count"] == 10
    again = commentsim.run_pipeline(clip, "Garlic bread in space", count=10,
                                    mock=True, seed=7, work_dir=tmp_path / "other", personas=PERSONAS)
    assert again == manifest
    batch = commentsim.generate(manifest["video_id"], count=5, **options)
    assert len(batch) == 5
    assert sum(c["kind"] == "primary" for c in batch) == 4
    ranked = commentsim.rank_personas(["bread", "space"], 5, **options)
    assert len(ranked) <= 5
    assert all("text" in r for r in ranked)


def test_cli_in_process():
    code, out, _ = commentsim.cli(["--version"])
    assert code == 0
    assert commentsim.__version__ in out
    code, _, err = commentsim.cli(["--mock", "eval", "--corpus", "broken"])
    assert code == 2
    assert "label=path" in err
