export interface TileRecord {
  tile_id: string;
  source_image: string;
  row: number;
  col: number;
  x: number;
  y: number;
  size: number;
  label: number;
  split: string;
  rejected: boolean;
}

export interface TilesPage {
  tiles: TileRecord[];
  total: number;
  offset: number;
  limit: number;
}

export interface ClassInfo {
  id: number;
  name: string;
}

export interface TileCard {
  tileId: string;
  thumbnailUrl: string;
  labelName: string;
  rejected: boolean;
  pending: boolean;
}
