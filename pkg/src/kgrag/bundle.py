"""Validated on-disk bundles: the graph files plus a content-hash manifest."""

from __future__ import annotations

import hashlib
import json
import shutil
from pathlib import Path

from .kg import GraphError, KnowledgeGraph, load_graph

__all__ = ["write_bundle", "load_bundle", "MANIFEST_NAME"]

MANIFEST_NAME = "manifest.json"
_FILES = ("nodes.jsonl", "edges.jsonl", "sentences.jsonl")


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_bundle(
    nodes: str | Path,
    edges: str | Path,
    sentences: str | Path,
    out_dir: str | Path,
    aliases: str | Path | None = None,
) -> KnowledgeGraph:
    """Validate the inputs, copy them into ``out_dir``, and write the manifest."""
    graph = load_graph(nodes, edges, sentences, aliases)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sources = {"nodes.jsonl": nodes, "edges.jsonl": edges, "sentences.jsonl": sentences}
    if aliases is not None:
        sources["aliases.jsonl"] = aliases
    hashes = {}
    for name, source in sources.items():
        target = out / name
        if Path(source).resolve() != target.resolve():
            shutil.copyfile(source, target)
        hashes[name] = _sha256(target)
    manifest = {
        "schema_version": 1,
        "files": hashes,
        "counts": graph.stats(),
    }
    (out / MANIFEST_NAME).write_text(
        json.dumps(manifest, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )
    return graph


def load_bundle(directory: str | Path) -> KnowledgeGraph:
    """Load a bundle directory; a plain directory with the three files also works."""
    directory = Path(directory)
    if not directory.is_dir():
        raise GraphError(f"knowledge base directory not found: {directory}")
    for name in _FILES:
        if not (directory / name).is_file():
            raise GraphError(f"knowledge base is missing {name}: {directory}")
    manifest_path = directory / MANIFEST_NAME
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        for name, expected in manifest.get("files", {}).items():
            actual = _sha256(directory / name)
            if actual != expected:
                raise GraphError(f"bundle file {name} does not match its manifest hash")
    aliases = directory / "aliases.jsonl"
    return load_graph(
        directory / "nodes.jsonl",
        directory / "edges.jsonl",
        directory / "sentences.jsonl",
        aliases if aliases.is_file() else None,
    )
