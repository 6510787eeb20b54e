import { ClassInfo, TileRecord, TilesPage } from './types.js';

const API_BASE = '/api';

export interface TileQuery {
  offset: number;
  limit: number;
  label?: number;
}

export async function fetchTiles(query: TileQuery): Promise<TilesPage> {
  const params = new URLSearchParams({
    offset: query.offset.toString(),
    limit: query.limit.toString(),
  });
  if (query.label !== undefined) {
    params.set('label', query.label.toString());
  }
  const response = await fetch(`${API_BASE}/tiles?${params.toString()}`);
  if (!response.ok) {
    throw new Error(`Failed to fetch tiles (${response.status})`);
  }
  return response.json();
}

export async function fetchClasses(): Promise<ClassInfo[]> {
  const response = await fetch(`${API_BASE}/classes`);
  if (!response.ok) {
    throw new Error(`Failed to fetch classes (${response.status})`);
  }
  const body = await response.json();
  return body.classes;
}

export async function postDecision(tileId: string, rejected: boolean): Promise<TileRecord> {
  const response = await fetch(`${API_BASE}/tiles/${encodeURIComponent(tileId)}/decision`, {
    method: 'POST',
    headers: { 'Content-Type': 'application/json' },
    body: JSON.stringify({ rejected }),
  });
  if (!response.ok) {
    throw new Error(`Failed to save decision for ${tileId} (${response.status})`);
  }
  return response.json();
}

export async function fetchRejectExport(): Promise<string> {
  const response = await fetch(`${API_BASE}/export/rejects`);
  if (!response.ok) {
    throw new Error(`Failed to export rejects (${response.status})`);
  }
  return response.text();
}

export function tileImageUrl(tileId: string): string {
  return `${API_BASE}/tiles/${encodeURIComponent(tileId)}/image`;
}
