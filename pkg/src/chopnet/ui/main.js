import { CurationApp } from './app.js';
function element(id) {
    const node = document.getElementById(id);
    if (!node) {
        throw new Error(`missing element #${id}`);
    }
    return node;
}
const elements = {
    grid: element('grid'),
    pager: element('pager'),
    banner: element('banner'),
    bannerText: element('banner-text'),
    retryButton: element('retry'),
    toasts: element('toasts'),
    classFilter: element('class-filter'),
    prevButton: element('prev'),
    nextButton: element('next'),
    exportButton: element('export'),
};
const app = new CurationApp(elements);
void app.start();
