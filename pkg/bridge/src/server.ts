/**
 * stdio request loop: one JSON request per line in, one response per line
 * out.  Malformed input yields an error response with a null id; request
 * errors echo the request id; the process stays alive through both.
 */

import { createInterface } from 'readline';
import { Readable, Writable } from 'stream';

import { MockModel } from './model.js';
import { PROTOCOL_VERSION, Request, err, formatResponse, ok } from './protocol.js';
import { WireError, tensorFromWire, tensorToWire } from './tensor.js';

export interface ServerOptions {
  modelName: string;
  latentShape: number[];
  T: number;
  betaStart: number;
  betaEnd: number;
  hangOp?: string;
}

const sleep = (ms: number) => new Promise((resolve) => setTimeout(resolve, ms));

export function serve(
  options: ServerOptions,
  input: Readable = process.stdin,
  output: Writable = process.stdout,
): Promise<number> {
  const model = new MockModel(options.latentShape, options.T, options.betaStart, options.betaEnd);
  const rl = createInterface({ input, terminal: false });

  const write = (line: string) =>
    new Promise<void>((resolve, reject) =>
      output.write(line, (e) => (e ? reject(e) : resolve())),
    );

  return new Promise<number>((resolve) => {
    let busy = Promise.resolve();

    const handle = async (line: string): Promise<boolean> => {
      if (!line.trim()) return false;
      let request: Request;
      try {
        request = JSON.parse(line);
      } catch (e) {
        await write(formatResponse(err(null, 'malformed', `unparseable request: ${e}`)));
        return false;
      }
      const id = typeof request.id === 'number' ? request.id : null;
      try {
        if (options.hangOp && request.op === options.hangOp) {
          await sleep(3_600_000);
        }
        switch (request.op) {
          case 'init':
            await write(
              formatResponse(
                ok(id, {
                  version: PROTOCOL_VERSION,
                  model: options.modelName,
                  space: 'latent',
                  latent_shape: model.latentShape,
                  schedule: { T: model.T, beta_start: model.betaStart, beta_end: model.betaEnd },
                }),
              ),
            );
            return false;
          case 'model_predict': {
            const { values, shape } = tensorFromWire(request.tensor);
            const out = model.predict(values, Number(request.t));
            await write(formatResponse(ok(id, { tensor: tensorToWire(out, shape) })));
            return false;
          }
          case 'sigma':
            await write(formatResponse(ok(id, { sigma: model.sigma(Number(request.t)) })));
            return false;
          case 'enc':
          case 'dec': {
            tensorFromWire(request.tensor); // validate, then echo: identity autoencoder
            await write(formatResponse(ok(id, { tensor: request.tensor })));
            return false;
          }
          case 'shutdown':
            await write(formatResponse(ok(id)));
            return true;
          default:
            throw new WireError('unknown-op', `unknown op ${JSON.stringify(request.op)}`);
        }
      } catch (e) {
        if (e instanceof WireError) {
          await write(formatResponse(err(id, e.code, e.message)));
        } else {
          await write(formatResponse(err(id, 'bad-request', String(e))));
        }
        return false;
      }
    };

    rl.on('line', (line) => {
      busy = busy.then(async () => {
        if (await handle(line)) {
          rl.close();
          resolve(0);
        }
      });
    });
    rl.on('close', () => {
      void busy.then(() => resolve(0));
    });
  });
}
