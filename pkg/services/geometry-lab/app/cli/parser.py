"""
Argument parsing into a validated :class:`RunConfig`.

Every problem with the command line surfaces as a ``UsageError`` naming the
offending flag; argparse is never allowed to exit the process on its own.
"""

from __future__ import annotations

import argparse
import json
import re
from collections.abc import Callable, Sequence
from typing import Any, Literal, NoReturn

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from common.errors import InvalidBodyError, UsageError

from app.core.config import DEFAULT_RESTARTS, DEFAULT_SAMPLES, DEFAULT_SEED, DEFAULT_SUBSPACES, SECTION_SAMPLES
from app.services.bodies import parse_body_spec

COMMANDS = ("stats", "small-ball", "moments", "sections", "verify")
EXPERIMENT_NAMES = (
    "transfer",
    "vrad",
    "neg-khinchine",
    "me-stability",
    "dim-lift",
    "upper-inclusion",
    "lower-inclusion",
    "cube-gap",
    "small-ball-fit",
    "concentration",
    "pos-khinchine",
)
# experiments that run on fixed built-in bodies and take no --body
_BODYLESS = {"transfer", "cube-gap"}
_MULTI_BODY = {"dim-lift"}
# argparse wording: "argument --x: ...", "the following arguments are required: --x, --y"
_FLAG_PATTERNS = (r"argument (\S+?):", r"required: (\S+?)(?:,|$)", r"arguments: (\S+)")


class RunConfig(BaseModel):
    """One CLI invocation. Grids left as None use the experiment's documented defaults."""

    model_config = ConfigDict(frozen=True)

    command: Literal["stats", "small-ball", "moments", "sections", "verify"]
    experiment: str | None = None
    bodies: tuple[str, ...] = ()
    n: tuple[int, ...] | None = None
    l: tuple[float, ...] | None = None
    k: tuple[float, ...] | None = None
    u: float = Field(2.0, gt=1.0)
    eps: tuple[float, ...] | None = None
    t: tuple[float, ...] | None = None
    C: tuple[float, ...] | None = None
    c: tuple[float, ...] | None = None
    samples: int = Field(DEFAULT_SAMPLES, gt=0)
    subspaces: int = Field(DEFAULT_SUBSPACES, gt=0)
    inner_samples: int = Field(SECTION_SAMPLES, gt=0)
    restarts: int = Field(DEFAULT_RESTARTS, gt=0)
    seed: int = Field(DEFAULT_SEED, ge=0, lt=2**64)
    threads: int | None = Field(None, gt=0)
    out: str | None = None
    format: Literal["json", "csv", "both"] = "json"

    @field_validator("bodies")
    @classmethod
    def _canonical_bodies(cls, v: tuple[str, ...]) -> tuple[str, ...]:
        return tuple(parse_body_spec(spec).spec for spec in v)

    @model_validator(mode="after")
    def _check_command(self) -> "RunConfig":
        if self.command == "verify":
            if self.experiment not in EXPERIMENT_NAMES:
                raise ValueError(f"unknown experiment '{self.experiment}'")
        elif self.experiment is not None:
            raise ValueError("only 'verify' takes an experiment name")
        return self

    @property
    def body(self) -> str | None:
        return self.bodies[0] if self.bodies else None

    def to_canonical(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_canonical(cls, text: str) -> "RunConfig":
        return cls.model_validate_json(text)


# ── Parser ────────────────────────────────────────────────────────────


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        for pattern in _FLAG_PATTERNS:
            match = re.search(pattern, message)
            if match:
                raise UsageError(message, flag=match.group(1))
        raise UsageError(message)


def _grid(cast: Callable[[str], Any]) -> Callable[[str], tuple[Any, ...]]:
    def _parse(text: str) -> tuple[Any, ...]:
        try:
            values = tuple(cast(part.strip()) for part in text.split(",") if part.strip())
        except ValueError as exc:
            raise argparse.ArgumentTypeError(f"malformed list '{text}'") from exc
        if not values:
            raise argparse.ArgumentTypeError("empty list")
        return values

    _parse.__name__ = f"{cast.__name__} list"
    return _parse


def _common_flags() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=DEFAULT_SEED, help="root seed (u64)")
    common.add_argument("--threads", type=int, default=None, help="worker threads; never changes outputs")
    common.add_argument("--out", default=None, help="output path (JSON file or CSV stem)")
    common.add_argument("--format", choices=("json", "csv", "both"), default="json")
    common.add_argument("--samples", type=int, default=DEFAULT_SAMPLES, help="sphere samples")
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="dvlab", description="Small-ball probabilities and random sections of convex bodies")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    common = _common_flags()

    stats = sub.add_parser("stats", parents=[common], help="M, Med, b, k and d of a body")
    stats.add_argument("--body", action="append", required=True)
    stats.add_argument("--u", type=float, default=2.0)
    stats.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)

    small_ball = sub.add_parser("small-ball", parents=[common], help="small-ball curve σ{‖x‖ < εM}")
    small_ball.add_argument("--body", action="append", required=True)
    small_ball.add_argument("--eps", type=_grid(float), default=None)

    moments = sub.add_parser("moments", parents=[common], help="negative and positive moments of the norm")
    moments.add_argument("--body", action="append", required=True)
    moments.add_argument("--l", type=_grid(float), default=None, help="negative orders")
    moments.add_argument("--k", type=_grid(float), default=None, help="positive orders")

    sections = sub.add_parser("sections", parents=[common], help="diameters, inradii and volume radii of sections")
    sections.add_argument("--body", action="append", required=True)
    sections.add_argument("--l", type=_grid(float), default=None, help="section dimension")
    sections.add_argument("--k", type=_grid(float), default=None, help="volume-radius order (default l)")
    sections.add_argument("--subspaces", type=int, default=DEFAULT_SUBSPACES)
    sections.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    sections.add_argument("--inner-samples", type=int, default=SECTION_SAMPLES)

    verify = sub.add_parser("verify", parents=[common], help="run one scripted verification")
    verify.add_argument("experiment", choices=EXPERIMENT_NAMES)
    verify.add_argument("--body", action="append", default=None)
    verify.add_argument("--n", type=_grid(int), default=None)
    verify.add_argument("--l", type=_grid(float), default=None)
    verify.add_argument("--k", type=_grid(float), default=None)
    verify.add_argument("--u", type=float, default=2.0)
    verify.add_argument("--eps", type=_grid(float), default=None)
    verify.add_argument("--t", type=_grid(float), default=None)
    verify.add_argument("--C", type=_grid(float), default=None)
    verify.add_argument("--c", type=_grid(float), default=None)
    verify.add_argument("--subspaces", type=int, default=DEFAULT_SUBSPACES)
    verify.add_argument("--inner-samples", type=int, default=SECTION_SAMPLES)
    verify.add_argument("--restarts", type=int, default=DEFAULT_RESTARTS)
    return parser


def _check_positive(ns: argparse.Namespace) -> None:
    for attr, flag in (
        ("samples", "--samples"),
        ("subspaces", "--subspaces"),
        ("inner_samples", "--inner-samples"),
        ("restarts", "--restarts"),
        ("threads", "--threads"),
    ):
        value = getattr(ns, attr, None)
        if value is not None and value <= 0:
            raise UsageError(f"must be positive, got {value}", flag=flag)
    if ns.seed < 0 or ns.seed >= 2**64:
        raise UsageError("must be an unsigned 64-bit integer", flag="--seed")
    if getattr(ns, "u", 2.0) <= 1.0:
        raise UsageError("u must be greater than 1", flag="--u")


def parse_args(argv: Sequence[str] | None = None) -> RunConfig:
    ns, extras = build_parser().parse_known_args(argv)
    if extras:
        raise UsageError(f"unrecognized arguments: {' '.join(extras)}", flag=extras[0])
    _check_positive(ns)

    bodies = tuple(ns.body or ())
    for spec in bodies:
        try:
            parse_body_spec(spec)
        except InvalidBodyError as exc:
            raise UsageError(exc.detail, flag="--body") from exc
    if len(bodies) > 1 and not (ns.command == "verify" and ns.experiment in _MULTI_BODY):
        raise UsageError(f"'{ns.command}' takes one body, got {len(bodies)}", flag="--body")
    if ns.command == "verify" and not bodies and ns.experiment not in _BODYLESS and ns.experiment != "lower-inclusion":
        raise UsageError(f"experiment '{ns.experiment}' needs a body", flag="--body")

    fields = {name: getattr(ns, name, None) for name in ("n", "l", "k", "eps", "t", "C", "c")}
    try:
        return _build_config(ns, bodies, fields)
    except ValidationError as exc:
        first = exc.errors()[0]
        field = str(first["loc"][0]) if first.get("loc") else ""
        flag = {"bodies": "--body", "": ""}.get(field, "--" + field.replace("_", "-"))
        raise UsageError(first["msg"], flag=flag) from exc


def _build_config(ns: argparse.Namespace, bodies: tuple[str, ...], fields: dict[str, Any]) -> RunConfig:
    return RunConfig(
        command=ns.command,
        experiment=getattr(ns, "experiment", None),
        bodies=bodies,
        u=getattr(ns, "u", 2.0),
        samples=ns.samples,
        subspaces=getattr(ns, "subspaces", DEFAULT_SUBSPACES),
        inner_samples=getattr(ns, "inner_samples", SECTION_SAMPLES),
        restarts=getattr(ns, "restarts", DEFAULT_RESTARTS),
        seed=ns.seed,
        threads=ns.threads,
        out=ns.out,
        format=ns.format,
        **fields,
    )
