/**
 * Entry point: parse flags, start the stdio responder.
 *
 *   node dist/main.js [--model NAME] [--latent-shape 4,8,8]
 *                     [--schedule 10,0.0001,0.05] [--hang-op OP]
 *                     [--fail-init]
 *
 * A real deployment would load the named diffusion pipeline here; this
 * package ships the mock model only, which is all the conformance suite
 * and desk-scale protocol runs need.
 */

import { serve } from './server.js';

interface Args {
  model: string;
  latentShape: number[];
  schedule: [number, number, number];
  hangOp?: string;
  failInit: boolean;
}

function parseArgs(argv: string[]): Args {
  const args: Args = {
    model: 'mock',
    latentShape: [4, 8, 8],
    schedule: [10, 0.0001, 0.05],
    failInit: false,
  };
  for (let i = 0; i < argv.length; i++) {
    const flag = argv[i];
    const next = () => {
      const v = argv[++i];
      if (v === undefined) throw new Error(`missing value for ${flag}`);
      return v;
    };
    switch (flag) {
      case '--model':
        args.model = next();
        break;
      case '--latent-shape':
        args.latentShape = next().split(',').map(Number);
        break;
      case '--schedule': {
        const parts = next().split(',').map(Number);
        if (parts.length !== 3) throw new Error('--schedule needs T,beta_start,beta_end');
        args.schedule = [parts[0], parts[1], parts[2]];
        break;
      }
      case '--hang-op':
        args.hangOp = next();
        break;
      case '--fail-init':
        args.failInit = true;
        break;
      default:
        throw new Error(`unknown flag ${flag}`);
    }
  }
  return args;
}

async function main(): Promise<number> {
  let args: Args;
  try {
    args = parseArgs(process.argv.slice(2));
  } catch (e) {
    console.error(`psyduck-bridge: ${e}`);
    return 2;
  }
  if (args.failInit) {
    console.error('psyduck-bridge: simulated model load failure');
    return 1;
  }
  return serve({
    modelName: args.model,
    latentShape: args.latentShape,
    T: args.schedule[0],
    betaStart: args.schedule[1],
    betaEnd: args.schedule[2],
    hangOp: args.hangOp,
  });
}

main().then((code) => process.exit(code));
