// Boots a real service for the suite: generate a small fixture workspace,
// train a tiny retargeting model, then serve it on a random local port.
import { spawn, spawnSync, type ChildProcess } from 'node:child_process';
import { mkdtempSync, rmSync, writeFileSync } from 'node:fs';
import { tmpdir } from 'node:os';
import { join } from 'node:path';
import type { TestProject } from 'vitest/node';

declare module 'vitest' {
  export interface ProvidedContext {
    apiBase: string;
  }
}

// Small enough to build in seconds, rich enough that multi-segment edits,
// boundary refinements, and infeasible wordings all occur.
const SPEC_TOML = `[synth]
seed = 7
duration_s = 20.0
duration_jitter = 0.3
gesture_every_s = 3.0

[styles]
neutral = 1.0
animated = 1.5
`;

const PYTHON = process.env.PHONOSYNTH_PYTHON ?? 'python3';

function cli(args: string[], cwd: string): void {
  const res = spawnSync(PYTHON, ['-m', 'phonosynth.cli', ...args], {
    cwd,
    encoding: 'utf8',
    timeout: 600_000,
  });
  if (res.status !== 0) {
    throw new Error(`phonosynth ${args[0]} failed (${res.status}):\n${res.stdout}\n${res.stderr}`);
  }
}

async function waitHealthy(base: string, child: ChildProcess, log: string[]): Promise<void> {
  const deadline = Date.now() + 120_000;
  let lastErr = '';
  while (Date.now() < deadline) {
    if (child.exitCode !== null) {
      throw new Error(`service exited with ${child.exitCode}:\n${log.join('')}`);
    }
    try {
      const res = await fetch(`${base}/health`);
      if (res.ok) {
        const doc = (await res.json()) as { has_model?: boolean };
        if (doc.has_model) return;
        lastErr = 'service is up but reports no trained model';
      }
    } catch (err) {
      lastErr = String(err);
    }
    await new Promise((r) => setTimeout(r, 250));
  }
  throw new Error(`service never became healthy at ${base}: ${lastErr}\n${log.join('')}`);
}

export default async function setup(project: TestProject) {
  const workdir = mkdtempSync(join(tmpdir(), 'phonosynth-ui-'));
  const ws = join(workdir, 'ws');
  writeFileSync(join(workdir, 'spec.toml'), SPEC_TOML);

  cli(['datagen', '--spec', join(workdir, 'spec.toml'), '--out', ws], workdir);
  cli(['train', '--workspace', ws, '--hidden', '8', '--epochs', '2', '--seed', '0'], workdir);

  const port = 8760 + Math.floor(Math.random() * 200);
  const base = `http://127.0.0.1:${port}`;
  const log: string[] = [];
  const child = spawn(
    PYTHON,
    ['-m', 'phonosynth.cli', 'serve', '--workspace', ws, '--host', '127.0.0.1', '--port', String(port)],
    { cwd: workdir, stdio: ['ignore', 'pipe', 'pipe'] },
  );
  child.stdout?.on('data', (chunk: Buffer) => log.push(chunk.toString()));
  child.stderr?.on('data', (chunk: Buffer) => log.push(chunk.toString()));

  try {
    await waitHealthy(base, child, log);
  } catch (err) {
    child.kill('SIGKILL');
    rmSync(workdir, { recursive: true, force: true });
    throw err;
  }

  project.provide('apiBase', base);

  return async () => {
    child.kill('SIGTERM');
    await new Promise((r) => setTimeout(r, 400));
    if (child.exitCode === null) child.kill('SIGKILL');
    rmSync(workdir, { recursive: true, force: true });
  };
}
