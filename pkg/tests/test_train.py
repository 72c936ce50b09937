import numpy as np
import pytest

torch = pytest.importorskip("torch")

from aai.cli import main  # noqa: E402
from aai.errors import ConfigError  # noqa: E402
from aai.model import ModelConfig, ToyDecoder, init_model, prefill  # noqa: E402
from aai.symbolic.traces import render_trace  # noqa: E402
from aai.symbolic.worlds import generate_worlds  # noqa: E402
from aai.train import TorchDecoder, TrainConfig, encode_corpus, train  # noqa: E402

CFG = ModelConfig(num_layers=2, num_heads=2, head_dim=4, model_dim=8, max_seq=128, seed=1)


def corpus():
    return [w.context + "\n" + render_trace(w) for w in generate_worlds(1, 1, 0, 10)]


def test_torch_forward_matches_numpy():
    model = init_model(CFG)
    tokens = list(b"# (Rule1): a.\nRule1")
    got = TorchDecoder(model)(torch.tensor([tokens])).detach().numpy()[0]
    np.testing.assert_allclose(got, prefill(model, tokens).logits, rtol=0, atol=1e-12)


def test_export_round_trip():
    model = init_model(CFG)
    assert TorchDecoder(model).export().checksum() == model.checksum()


def test_training_lowers_loss_and_is_deterministic():
    losses = []
    tc = TrainConfig(steps=25, batch_size=4, context=48, seed=2)
    first = train(corpus(), CFG, tc, log=lambda step, loss: losses.append(loss))
    assert losses[-1] < losses[0]
    assert isinstance(first, ToyDecoder) and first.config == CFG
    assert train(corpus(), CFG, tc).checksum() == first.checksum()
    assert first.checksum() != init_model(CFG).checksum()


def test_corpus_encoding():
    assert encode_corpus(["ab", "c"]).tolist() == [97, 98, 256, 99, 256]


def test_tiny_corpus_rejected():
    with pytest.raises(ConfigError):
        train(["ab"], CFG, TrainConfig(context=64))


def test_cli_train_then_run(tmp_path, capsys):
    data = tmp_path / "s.jsonl"
    main(["gen-synth", "--depth", "1", "--count", "6", "--out", str(data)])
    model_path = tmp_path / "model"
    args = ["train", "--dataset", str(data), "--steps", "3", "--context", "32",
            "--num-layers", "1", "--num-heads", "2", "--head-dim", "4", "--out", str(model_path)]
    assert main(args) == 0
    assert model_path.exists()
    loaded = ToyDecoder.load(model_path)
    assert loaded.config.num_heads == 2
    capsys.readouterr()
    assert main(["run", "--dataset", str(data), "--model", str(model_path), "--max-new", "4"]) == 0
    out = capsys.readouterr().out
    assert "num_heads = 2" in out and "head_dim = 4" in out
