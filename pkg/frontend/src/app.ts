import { fetchClasses, fetchRejectExport, fetchTiles, postDecision, tileImageUrl } from './api.js';
import { renderGrid } from './cards.js';
import { TileCard, TileRecord } from './types.js';

export interface AppElements {
  grid: HTMLElement;
  pager: HTMLElement;
  banner: HTMLElement;
  bannerText: HTMLElement;
  retryButton: HTMLButtonElement;
  toasts: HTMLElement;
  classFilter: HTMLSelectElement;
  prevButton: HTMLButtonElement;
  nextButton: HTMLButtonElement;
  exportButton: HTMLButtonElement;
}

export type DownloadFn = (filename: string, text: string) => void;

function downloadText(filename: string, text: string): void {
  const blob = new Blob([text], { type: 'text/plain' });
  const url = URL.createObjectURL(blob);
  const anchor = document.createElement('a');
  anchor.href = url;
  anchor.download = filename;
  anchor.click();
  URL.revokeObjectURL(url);
}

export class CurationApp {
  offset = 0;
  limit: number;
  labelFilter: number | undefined = undefined;
  total = 0;

  private cards: TileCard[] = [];
  private labelNames = new Map<number, string>();
  private el: AppElements;
  private download: DownloadFn;

  constructor(el: AppElements, limit = 50, download: DownloadFn = downloadText) {
    this.el = el;
    this.limit = limit;
    this.download = download;
    this.wireEvents();
  }

  async start(): Promise<void> {
    try {
      const classes = await fetchClasses();
      this.labelNames = new Map(classes.map((c) => [c.id, c.name]));
      this.el.classFilter.innerHTML =
        `<option value="">all classes</option>` +
        classes.map((c) => `<option value="${c.id}">${c.name}</option>`).join('');
    } catch (err) {
      this.fail(err);
      return;
    }
    await this.loadPage();
  }

  async loadPage(): Promise<void> {
    try {
      const page = await fetchTiles({ offset: this.offset, limit: this.limit, label: this.labelFilter });
      this.total = page.total;
      this.cards = page.tiles.map((rec) => this.cardFromRecord(rec));
      this.el.banner.hidden = true;
      this.render();
    } catch (err) {
      this.fail(err);
    }
  }

  async toggleReject(tileId: string): Promise<void> {
    const card = this.cards.find((c) => c.tileId === tileId);
    if (!card || card.pending) {
      return;
    }
    card.pending = true;
    this.render();
    try {
      const updated = await postDecision(tileId, !card.rejected);
      // the server acknowledgment, not the local toggle, is the state of record
      card.rejected = updated.rejected;
    } catch (err) {
      this.toast(String(err instanceof Error ? err.message : err));
    } finally {
      card.pending = false;
      this.render();
    }
  }

  async exportRejects(): Promise<void> {
    try {
      const text = await fetchRejectExport();
      this.download('rejects.txt', text);
    } catch (err) {
      this.toast(String(err instanceof Error ? err.message : err));
    }
  }

  private cardFromRecord(rec: TileRecord): TileCard {
    return {
      tileId: rec.tile_id,
      thumbnailUrl: tileImageUrl(rec.tile_id),
      labelName: this.labelNames.get(rec.label) ?? `class ${rec.label}`,
      rejected: rec.rejected,
      pending: false,
    };
  }

  private render(): void {
    this.el.grid.innerHTML = renderGrid(this.cards);
    if (this.total === 0) {
      this.el.pager.textContent = 'no tiles';
    } else {
      const last = this.offset + this.cards.length;
      this.el.pager.textContent = `tiles ${this.offset + 1}-${last} of ${this.total}`;
    }
    this.el.prevButton.disabled = this.offset === 0;
    this.el.nextButton.disabled = this.offset + this.limit >= this.total;
  }

  private fail(err: unknown): void {
    this.cards = [];
    this.total = 0;
    this.el.grid.innerHTML = '';
    this.el.pager.textContent = '';
    this.el.bannerText.textContent = String(err instanceof Error ? err.message : err);
    this.el.banner.hidden = false;
  }

  private toast(message: string): void {
    const node = document.createElement('div');
    node.className = 'toast';
    node.textContent = message;
    this.el.toasts.appendChild(node);
    setTimeout(() => node.remove(), 4000);
  }

  private cardIdFromEvent(event: Event): string | null {
    const target = event.target;
    if (!(target instanceof Element)) {
      return null;
    }
    const card = target.closest('.card');
    return card instanceof HTMLElement ? card.dataset.tileId ?? null : null;
  }

  private wireEvents(): void {
    this.el.grid.addEventListener('click', (event) => {
      const tileId = this.cardIdFromEvent(event);
      if (tileId) {
        void this.toggleReject(tileId);
      }
    });
    this.el.grid.addEventListener('keydown', (event) => {
      if (event.key !== 'x') {
        return;
      }
      const tileId = this.cardIdFromEvent(event);
      if (tileId) {
        void this.toggleReject(tileId);
      }
    });
    this.el.classFilter.addEventListener('change', () => {
      const value = this.el.classFilter.value;
      this.labelFilter = value === '' ? undefined : Number(value);
      this.offset = 0;
      void this.loadPage();
    });
    this.el.prevButton.addEventListener('click', () => {
      this.offset = Math.max(0, this.offset - this.limit);
      void this.loadPage();
    });
    this.el.nextButton.addEventListener('click', () => {
      if (this.offset + this.limit < this.total) {
        this.offset += this.limit;
        void this.loadPage();
      }
    });
    this.el.exportButton.addEventListener('click', () => {
      void this.exportRejects();
    });
    this.el.retryButton.addEventListener('click', () => {
      void this.start();
    });
  }
}
