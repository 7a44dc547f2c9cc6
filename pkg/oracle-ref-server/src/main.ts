#!/usr/bin/env node
import yargs from 'yargs';
import { hideBin } from 'yargs/helpers';
import {
  DEFAULT_THRESHOLD,
  ServerConfig,
  ServerMode,
  serveStdio,
  serveTcp,
} from './server';

export async function main(argv: string[]): Promise<number> {
  const args = await yargs(argv)
    .option('mode', {
      choices: ['echo', 'detector'] as const,
      default: 'echo' as ServerMode,
      describe: 'reply with a fixture list or run a saved model',
    })
    .option('model', {
      type: 'string',
      describe: 'saved model directory (detector mode)',
    })
    .option('threshold', {
      type: 'number',
      default: DEFAULT_THRESHOLD,
      describe: 'drop detections scoring below this before replying',
    })
    .option('tcp', {
      type: 'number',
      describe: 'listen on this TCP port (0 picks one)',
    })
    .option('stdio', {
      type: 'boolean',
      describe: 'serve a single session on stdin/stdout',
    })
    .conflicts('tcp', 'stdio')
    .strict()
    .parse();

  const cfg: ServerConfig = {
    mode: args.mode,
    model: args.model,
    threshold: args.threshold,
  };

  try {
    if (args.tcp != null) {
      const running = await serveTcp(cfg, args.tcp);
      // announce the bound port for ephemeral-port callers
      process.stdout.write(`PORT ${running.port}\n`);
      await running.done;
    } else {
      await serveStdio(cfg);
    }
  } catch (err) {
    process.stderr.write(`oracle-ref-server: ${String(err)}\n`);
    return 2;
  }
  return 0;
}

if (require.main === module) {
  void main(hideBin(process.argv)).then((code) => {
    process.exitCode = code;
  });
}
