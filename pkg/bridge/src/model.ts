/**
 * Mock latent pipeline: the stand-in model served when no real diffusion
 * runtime is wired in.
 *
 * The mean prediction shrinks the input by sqrt(alpha_t), which is the
 * exact one-step denoiser for data drawn from a standard normal prior, so
 * the protocol core behaves against this mock exactly as against its own
 * closed-form backend.  The autoencoder pair is the identity: encoded
 * tensors survive an enc/dec round trip bit for bit.
 */

import { WireError } from './tensor.js';

export class MockModel {
  readonly latentShape: number[];
  readonly T: number;
  readonly betaStart: number;
  readonly betaEnd: number;
  private readonly alpha: Float64Array;
  private readonly sigmaT: Float64Array;

  constructor(latentShape: number[], T: number, betaStart: number, betaEnd: number) {
    if (T < 2 || !(betaStart > 0) || !(betaEnd < 1) || betaStart > betaEnd) {
      throw new Error(`bad schedule: T=${T}, beta ${betaStart}..${betaEnd}`);
    }
    this.latentShape = latentShape;
    this.T = T;
    this.betaStart = betaStart;
    this.betaEnd = betaEnd;
    this.alpha = new Float64Array(T);
    this.sigmaT = new Float64Array(T);
    let abar = 1.0;
    let abarPrev = 1.0;
    for (let t = 1; t <= T; t++) {
      const beta = betaStart + ((betaEnd - betaStart) * (t - 1)) / (T - 1);
      this.alpha[t - 1] = 1.0 - beta;
      abarPrev = abar;
      abar *= 1.0 - beta;
      this.sigmaT[t - 1] = Math.sqrt((beta * (1.0 - abarPrev)) / (1.0 - abar));
    }
  }

  checkT(t: number): void {
    if (!Number.isInteger(t) || t < 1 || t > this.T) {
      throw new WireError('bad-timestep', `timestep ${t} outside 1..${this.T}`);
    }
  }

  predict(x: Float32Array, t: number): Float32Array {
    this.checkT(t);
    const scale = Math.sqrt(this.alpha[t - 1]);
    const out = new Float32Array(x.length);
    for (let i = 0; i < x.length; i++) {
      out[i] = Math.fround(scale * x[i]);
    }
    return out;
  }

  sigma(t: number): number {
    this.checkT(t);
    return this.sigmaT[t - 1];
  }
}
