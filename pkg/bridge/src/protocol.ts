/**
 * psyduck-bridge/1 message types.
 *
 * Newline-delimited JSON, strict one-request-one-response pairing by id.
 * Error responses carry a machine-readable code and never terminate the
 * session; only `shutdown` (or a fatal startup failure) ends the process.
 */

import { WireTensor } from './tensor.js';

export const PROTOCOL_VERSION = 'psyduck-bridge/1';

export type Op = 'init' | 'model_predict' | 'sigma' | 'enc' | 'dec' | 'shutdown';

export interface Request {
  id: number;
  op: Op;
  version?: string;
  t?: number;
  tensor?: WireTensor;
  seed?: string;
}

export interface OkResponse {
  id: number | null;
  ok: true;
  [key: string]: unknown;
}

export interface ErrResponse {
  id: number | null;
  ok: false;
  error: { code: string; message: string };
}

export type Response = OkResponse | ErrResponse;

export function ok(id: number | null, body: Record<string, unknown> = {}): OkResponse {
  return { id, ok: true, ...body };
}

export function err(id: number | null, code: string, message: string): ErrResponse {
  return { id, ok: false, error: { code, message } };
}

export function formatResponse(response: Response): string {
  return JSON.stringify(response) + '\n';
}
