"""Command-line front end.

Subcommands: sweep, decode, memory, awq, quantize. Every command is
deterministic given its flags; seeds are always explicit flags with
documented defaults. JSON and CSV layouts emitted here are frozen
contracts pinned by golden tests.

Exit codes: 0 success, 2 configuration/usage error, 3 I/O error
(unreadable, unparseable, or unwritable files).
"""

from __future__ import annotations

import argparse
import json
import sys
from typing import Optional

import numpy as np

from .awq import (
    CalibrationBatch,
    awq_quantize,
    awq_result_to_json_dict,
    builtin_saliency_case,
    synthetic_calibration,
)
from .cache import CacheMode
from .decoder import ToyModelConfig, build_model, generate as decoder_generate
from .errors import ConfigError, FormatError, KvcompError
from .memory import MemoryScenario, wall_report
from .rng import SplitMix64
from .schemes import (
    SchemeConfig,
    SchemeKind,
    bits_per_element,
    dequantize,
    quantize_kv_pair,
)
from .sweep import load_config, run_sweep, write_csv
from .tensor import Tensor2D, read_tensor, write_tensor

__all__ = ["main"]

# Salt mixed into --seed to derive the decode command's prompt tokens, so the
# prompt stream and the model weight stream never collide.
_PROMPT_SALT = 0x50524F4D5054_5EED


def _emit_text(text: str, out: Optional[str]) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


def _emit_json(obj: dict, out: Optional[str]) -> None:
    _emit_text(json.dumps(obj, indent=2) + "\n", out)


def _add_scheme_flags(p: argparse.ArgumentParser, with_pair_bits: bool = True) -> None:
    p.add_argument("--scheme", default="passthrough16", metavar="KIND",
                   help="scheme kind (default: passthrough16)")
    if with_pair_bits:
        p.add_argument("--b-k", type=int, default=None, help="K-side bits")
        p.add_argument("--b-v", type=int, default=None, help="V-side bits")
    p.add_argument("--g", type=int, default=None, help="group size (group_c/group_t)")
    p.add_argument("--g1", type=int, default=None, help="K-side group size (hybrids)")
    p.add_argument("--g2", type=int, default=None, help="V-side group size (hybrids)")
    p.add_argument("--s", type=float, default=None, help="outlier fraction")


def _scheme_from_args(args, b_override: Optional[int] = None) -> SchemeConfig:
    d = {"kind": args.scheme}
    b_k = b_override if b_override is not None else getattr(args, "b_k", None)
    b_v = b_override if b_override is not None else getattr(args, "b_v", None)
    for key, val in (("b_k", b_k), ("b_v", b_v), ("g", args.g),
                     ("g1", args.g1), ("g2", args.g2), ("s", args.s)):
        if val is not None:
            d[key] = val
    return SchemeConfig.from_dict(d)


def _cmd_sweep(args) -> int:
    job = load_config(args.config)
    rows = run_sweep(job, mode=CacheMode(args.mode), workers=args.workers)
    if args.out is None:
        write_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", encoding="utf-8", newline="") as fh:
            write_csv(rows, fh)
    return 0


def _cmd_decode(args) -> int:
    model_cfg = ToyModelConfig(
        n_layers=args.layers,
        d_model=args.d_model,
        n_heads=args.n_heads,
        vocab=args.vocab,
        max_seq=args.max_seq,
        seed=args.seed,
    )
    scheme = _scheme_from_args(args)
    model = build_model(model_cfg)
    if args.prompt_len < 1:
        raise ConfigError(f"--prompt-len must be >= 1, got {args.prompt_len}")
    prompt_rng = SplitMix64(args.seed ^ _PROMPT_SALT)
    prompt = [int(t % model_cfg.vocab) for t in prompt_rng.u64(args.prompt_len)]
    _, report = decoder_generate(
        model,
        prompt,
        args.n_new,
        scheme,
        mode=CacheMode(args.mode),
        teacher_forced=args.teacher_forced,
        prefill_exempt=args.prefill_exempt,
    )
    doc = {
        "scheme": scheme.kind.value,
        "b_K": scheme.b_k,
        "b_V": scheme.b_v,
        "g": scheme.g,
        "g1": scheme.g1,
        "g2": scheme.g2,
        "s": scheme.s,
        "mode": args.mode,
        "exact_prefix_len": report.exact_prefix_len,
        "mean_logit_kl": report.mean_logit_kl,
        "attn_output_cosine": report.attn_output_cosine,
        "tokens_generated": report.tokens_generated,
        "seed": args.seed,
    }
    if args.teacher_forced:
        doc["teacher_forced"] = True
    _emit_json(doc, args.out)
    return 0


def _cmd_memory(args) -> int:
    scenario = MemoryScenario(
        n_layers=args.layers,
        d_model=args.d_model,
        seq_len=args.seq,
        batch=args.batch,
        bytes_per_value=args.bytes_per_value,
        model_params=args.params,
        bytes_per_param=args.bytes_per_param,
    )
    cfg = _scheme_from_args(args) if args.scheme is not None else None
    _emit_json(wall_report(scenario, cfg), args.out)
    return 0


def _cmd_awq(args) -> int:
    if args.builtin_saliency:
        W, calib = builtin_saliency_case(args.seed)
        b = args.b if args.b is not None else 3
        g_w = args.g_w if args.g_w is not None else 16
    else:
        b = args.b if args.b is not None else 4
        g_w = args.g_w if args.g_w is not None else 128
        if args.weights is not None:
            W = read_tensor(args.weights)
            if args.calib is not None:
                calib = CalibrationBatch(read_tensor(args.calib))
            else:
                calib = synthetic_calibration(args.n_samples, W.cols, args.seed + 1)
        else:
            rng = SplitMix64(args.seed)
            w = rng.gaussian(args.d_out * args.d_in).reshape(args.d_out, args.d_in)
            W = Tensor2D(w * args.d_in**-0.5)
            calib = synthetic_calibration(args.n_samples, args.d_in, args.seed + 1)
    res = awq_quantize(W, calib, b, g_w, n_alpha=args.n_alpha)
    _emit_json(awq_result_to_json_dict(res), args.out)
    return 0


def _cmd_quantize(args) -> int:
    t = read_tensor(args.input)
    scheme = _scheme_from_args(args, b_override=args.b)
    if scheme.kind in (SchemeKind.HYBRID_KCVT, SchemeKind.HYBRID_KTVC):
        raise ConfigError(
            "hybrid schemes describe a K/V pair; the quantize command takes one tensor"
        )
    q_k, _ = quantize_kv_pair(t, t, scheme)
    recon = dequantize(q_k)
    diff = recon.data.astype(np.float64) - t.data.astype(np.float64)
    doc = {
        "rows": t.rows,
        "cols": t.cols,
        "scheme": scheme.to_dict(),
        "mse": float(np.mean(diff * diff)),
        "max_abs_err": float(np.abs(diff).max()) if diff.size else 0.0,
        "bpe": bits_per_element(q_k),
    }
    if args.out_tensor is not None:
        write_tensor(args.out_tensor, recon)
        doc["out_tensor"] = args.out_tensor
    _emit_json(doc, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kvcomp",
        description="KV-cache and weight quantization workbench",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="evaluate spec x scheme grid from a config file")
    p.add_argument("config", help="TOML (or .json) sweep config")
    p.add_argument("--mode", choices=["streaming", "simulation"], default="simulation")
    p.add_argument("--out", default=None, help="CSV path (default stdout)")
    p.add_argument("--workers", type=int, default=4)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("decode", help="toy decoder divergence run vs FP16 baseline")
    _add_scheme_flags(p)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--n-heads", type=int, default=4)
    p.add_argument("--vocab", type=int, default=256)
    p.add_argument("--max-seq", type=int, default=256)
    p.add_argument("--prompt-len", type=int, default=16)
    p.add_argument("--n-new", type=int, default=64)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--mode", choices=["streaming", "simulation"], default="simulation")
    p.add_argument("--teacher-forced", action="store_true")
    p.add_argument("--prefill-exempt", action="store_true")
    p.add_argument("--out", default=None, help="JSON path (default stdout)")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("memory", help="KV-cache vs model size arithmetic")
    p.add_argument("--layers", type=int, default=32)
    p.add_argument("--d-model", type=int, default=4096)
    p.add_argument("--seq", type=int, default=1000)
    p.add_argument("--batch", type=int, default=100)
    p.add_argument("--bytes-per-value", type=int, default=2)
    p.add_argument("--params", type=int, default=7_000_000_000)
    p.add_argument("--bytes-per-param", type=int, default=2)
    p.add_argument("--scheme", default=None, metavar="KIND",
                   help="also report effective bytes under this scheme")
    p.add_argument("--b-k", type=int, default=None)
    p.add_argument("--b-v", type=int, default=None)
    p.add_argument("--g", type=int, default=None)
    p.add_argument("--g1", type=int, default=None)
    p.add_argument("--g2", type=int, default=None)
    p.add_argument("--s", type=float, default=None)
    p.add_argument("--out", default=None, help="JSON path (default stdout)")
    p.set_defaults(func=_cmd_memory)

    p = sub.add_parser("awq", help="activation-aware weight quantization search")
    p.add_argument("--b", type=int, default=None,
                   help="weight bits (default 4; 3 under --builtin-saliency)")
    p.add_argument("--g-w", type=int, default=None,
                   help="weight group size (default 128; 16 under --builtin-saliency)")
    p.add_argument("--n-alpha", type=int, default=21)
    p.add_argument("--builtin-saliency", action="store_true",
                   help="run the canonical 100x-channel test case")
    p.add_argument("--weights", default=None, help="KVT1 weight matrix (d_out x d_in)")
    p.add_argument("--calib", default=None, help="KVT1 activation matrix")
    p.add_argument("--d-in", type=int, default=128)
    p.add_argument("--d-out", type=int, default=64)
    p.add_argument("--n-samples", type=int, default=128)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default=None, help="JSON path (default stdout)")
    p.set_defaults(func=_cmd_awq)

    p = sub.add_parser("quantize", help="KVT1 file quantize/dequantize round trip")
    p.add_argument("input", help="KVT1 tensor file")
    _add_scheme_flags(p, with_pair_bits=False)
    p.add_argument("--b", type=int, default=None, help="bits for both sides")
    p.add_argument("--out-tensor", default=None, help="write reconstruction as KVT1")
    p.add_argument("--out", default=None, help="stats JSON path (default stdout)")
    p.set_defaults(func=_cmd_quantize)

    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FormatError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except KvcompError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
