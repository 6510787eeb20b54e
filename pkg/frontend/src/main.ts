import { AppElements, CurationApp } from './app.js';

function element<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) {
    throw new Error(`missing element #${id}`);
  }
  return node as T;
}

const elements: AppElements = {
  grid: element('grid'),
  pager: element('pager'),
  banner: element('banner'),
  bannerText: element('banner-text'),
  retryButton: element<HTMLButtonElement>('retry'),
  toasts: element('toasts'),
  classFilter: element<HTMLSelectElement>('class-filter'),
  prevButton: element<HTMLButtonElement>('prev'),
  nextButton: element<HTMLButtonElement>('next'),
  exportButton: element<HTMLButtonElement>('export'),
};

const app = new CurationApp(elements);
void app.start();
